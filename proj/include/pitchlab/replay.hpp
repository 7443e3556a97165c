#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <mutex>
#include <string>
#include <vector>

#include "pitchlab/nets.hpp"
#include "pitchlab/rng.hpp"
#include "pitchlab/sim.hpp"

namespace pitchlab::replay {

struct SliceRecord {
  nets::Observation obs;
  std::array<float, sim::kActionDim> action{};  // executed pre-clamp policy sample
  sim::RewardComponents reward{};
  float behavior_log_prob = 0.0f;
  std::array<float, sim::kActionDim> behavior_mean{}, behavior_std{};
  uint8_t episode_start = 0;
};

struct TrajectorySlice {
  std::vector<SliceRecord> records;
  std::vector<float> init_h, init_c;  // policy recurrent state at slice start
  uint64_t policy_version = 0;

  int length() const { return static_cast<int>(records.size()); }
};

// Hash of the record layout (slice length, pixel payload size, recurrent
// width); import refuses datasets whose hash differs.
uint64_t schema_hash(const TrajectorySlice& slice);

std::vector<uint8_t> serialize_slice(const TrajectorySlice& slice);
TrajectorySlice deserialize_slice(const std::vector<uint8_t>& bytes);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);

  void append(TrajectorySlice slice);
  size_t size() const;
  size_t capacity() const { return capacity_; }
  // Layout pinned by the first append; length is -1 while empty-formatted.
  int expected_length() const;
  uint64_t expected_schema() const;
  uint64_t inserted() const { return inserted_.load(); }
  uint64_t sampled() const { return sampled_.load(); }
  uint64_t evicted() const { return evicted_.load(); }
  uint64_t env_steps_inserted() const { return env_steps_.load(); }

  // Uniform sample of n slices (copies, so learners never race eviction).
  std::vector<TrajectorySlice> sample(Rng& rng, size_t n);
  // Quiesced copy of current contents, oldest first.
  std::vector<TrajectorySlice> snapshot() const;

 private:
  mutable std::mutex mu_;
  std::deque<TrajectorySlice> ring_;
  size_t capacity_;
  int expected_length_ = -1;
  uint64_t expected_schema_ = 0;
  std::atomic<uint64_t> inserted_{0}, sampled_{0}, evicted_{0}, env_steps_{0};
};

struct DatasetFile {
  std::string path;
  std::string experiment_id;
  int slice_length = 0;
  uint64_t schema = 0;
  std::vector<TrajectorySlice> slices;
  size_t skipped_records = 0;  // failed checksum or truncated frame
};

size_t export_dataset(const std::vector<TrajectorySlice>& slices, const std::string& path,
                      const std::string& experiment_id);
DatasetFile import_dataset(const std::string& path);

// mix_ratio = offline fraction; ceil(mix*n) offline draws uniform over all
// offline records, remainder uniform over the online buffer.
std::vector<TrajectorySlice> sample_batch(ReplayBuffer& online,
                                          const std::vector<DatasetFile>& offline,
                                          double mix_ratio, size_t n, Rng& rng);

// Permits one learner step when inserted env steps keep the steps-per-update
// ratio at or above the target.
class RatioGate {
 public:
  explicit RatioGate(double target_ratio) : target_(target_ratio) {}
  void note_env_steps(uint64_t n) { env_steps_ += n; }
  bool learner_permitted() const {
    return static_cast<double>(env_steps_.load()) /
               static_cast<double>(learner_steps_.load() + 1) >=
           target_;
  }
  void note_learner_step() { ++learner_steps_; }
  // Actors pause once inserted data runs ahead of the learner, except during
  // the initial fill below warmup_env_steps.
  bool actor_permitted(uint64_t warmup_env_steps) const {
    uint64_t e = env_steps_.load();
    return e < warmup_env_steps ||
           static_cast<double>(e) <
               target_ * static_cast<double>(learner_steps_.load() + 1);
  }
  double measured_ratio() const {
    uint64_t s = learner_steps_.load();
    return s == 0 ? 0.0 : static_cast<double>(env_steps_.load()) / static_cast<double>(s);
  }
  uint64_t learner_steps() const { return learner_steps_.load(); }
  uint64_t env_steps() const { return env_steps_.load(); }

 private:
  double target_;
  std::atomic<uint64_t> env_steps_{0}, learner_steps_{0};
};

}  // namespace pitchlab::replay
