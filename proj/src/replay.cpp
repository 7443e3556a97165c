#include "pitchlab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pitchlab/report.hpp"

namespace pitchlab::replay {

namespace {

constexpr char kMagic[4] = {'R', 'A', 'E', 'D'};
constexpr uint32_t kFormatVersion = 1;

uint64_t fnv1a(uint64_t h, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  for (size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

size_t pixel_payload(const TrajectorySlice& slice) {
  size_t px = slice.records.front().obs.pixels.size();
  for (const auto& r : slice.records)
    if (r.obs.pixels.size() != px) throw DataError("slice mixes pixel payload sizes");
  return px;
}

}  // namespace

uint64_t schema_hash(const TrajectorySlice& slice) {
  if (slice.records.empty()) throw DataError("schema of an empty slice");
  uint64_t h = 1469598103934665603ull;
  uint64_t fields[4] = {static_cast<uint64_t>(slice.length()),
                        static_cast<uint64_t>(pixel_payload(slice)),
                        static_cast<uint64_t>(slice.init_h.size()),
                        static_cast<uint64_t>(kFormatVersion)};
  return fnv1a(h, fields, sizeof(fields));
}

std::vector<uint8_t> serialize_slice(const TrajectorySlice& slice) {
  if (slice.records.empty()) throw DataError("serialize of an empty slice");
  if (slice.init_h.size() != slice.init_c.size())
    throw DataError("recurrent state halves differ in width");
  const uint32_t px = static_cast<uint32_t>(pixel_payload(slice));
  ByteWriter w;
  w.pod(slice.policy_version);
  w.pod(static_cast<uint32_t>(slice.init_h.size()));
  for (float v : slice.init_h) w.pod(v);
  for (float v : slice.init_c) w.pod(v);
  w.pod(static_cast<uint32_t>(slice.records.size()));
  w.pod(px);
  for (const auto& r : slice.records) {
    if (px) w.raw(r.obs.pixels.data(), px);
    for (float v : r.obs.proprio) w.pod(v);
    for (float v : r.obs.privileged) w.pod(v);
    for (float v : r.action) w.pod(v);
    w.pod(r.reward.scoring);
    w.pod(r.reward.velocity_to_ball);
    w.pod(r.reward.ball_to_goal_velocity);
    w.pod(r.reward.upright);
    w.pod(r.reward.total);
    w.pod(r.behavior_log_prob);
    for (float v : r.behavior_mean) w.pod(v);
    for (float v : r.behavior_std) w.pod(v);
    w.pod(r.episode_start);
  }
  return std::move(w.buf);
}

TrajectorySlice deserialize_slice(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  TrajectorySlice s;
  s.policy_version = r.pod<uint64_t>();
  uint32_t width = r.pod<uint32_t>();
  s.init_h.resize(width);
  s.init_c.resize(width);
  for (auto& v : s.init_h) v = r.pod<float>();
  for (auto& v : s.init_c) v = r.pod<float>();
  uint32_t count = r.pod<uint32_t>();
  uint32_t px = r.pod<uint32_t>();
  if (count == 0) throw DataError("slice payload with zero records");
  s.records.resize(count);
  for (auto& rec : s.records) {
    rec.obs.pixels.resize(px);
    if (px) r.raw(rec.obs.pixels.data(), px);
    for (auto& v : rec.obs.proprio) v = r.pod<float>();
    for (auto& v : rec.obs.privileged) v = r.pod<float>();
    for (auto& v : rec.action) v = r.pod<float>();
    rec.reward.scoring = r.pod<double>();
    rec.reward.velocity_to_ball = r.pod<double>();
    rec.reward.ball_to_goal_velocity = r.pod<double>();
    rec.reward.upright = r.pod<double>();
    rec.reward.total = r.pod<double>();
    rec.behavior_log_prob = r.pod<float>();
    for (auto& v : rec.behavior_mean) v = r.pod<float>();
    for (auto& v : rec.behavior_std) v = r.pod<float>();
    rec.episode_start = r.pod<uint8_t>();
  }
  if (!r.done()) throw DataError("slice payload has trailing bytes");
  return s;
}

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::append(TrajectorySlice slice) {
  if (slice.records.empty()) throw DataError("replay schema error: empty slice");
  uint64_t schema = schema_hash(slice);
  int length = slice.length();
  std::lock_guard<std::mutex> lock(mu_);
  if (expected_length_ < 0) {
    expected_length_ = length;
    expected_schema_ = schema;
  } else if (length != expected_length_) {
    throw DataError("replay schema error: slice length " + std::to_string(length) +
                    " != " + std::to_string(expected_length_));
  } else if (schema != expected_schema_) {
    throw DataError("replay schema error: observation layout changed");
  }
  ring_.push_back(std::move(slice));
  if (ring_.size() > capacity_) {
    ring_.pop_front();
    evicted_.fetch_add(1);
  }
  inserted_.fetch_add(1);
  env_steps_.fetch_add(static_cast<uint64_t>(length));
}

size_t ReplayBuffer::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return ring_.size();
}

int ReplayBuffer::expected_length() const {
  std::lock_guard<std::mutex> lock(mu_);
  return expected_length_;
}

uint64_t ReplayBuffer::expected_schema() const {
  std::lock_guard<std::mutex> lock(mu_);
  return expected_schema_;
}

std::vector<TrajectorySlice> ReplayBuffer::sample(Rng& rng, size_t n) {
  std::lock_guard<std::mutex> lock(mu_);
  if (ring_.empty()) throw DataError("replay underflow: empty online buffer");
  std::vector<TrajectorySlice> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i)
    out.push_back(ring_[static_cast<size_t>(rng.uniform_int(ring_.size()))]);
  sampled_.fetch_add(n);
  return out;
}

std::vector<TrajectorySlice> ReplayBuffer::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return {ring_.begin(), ring_.end()};
}

size_t export_dataset(const std::vector<TrajectorySlice>& slices, const std::string& path,
                      const std::string& experiment_id) {
  if (slices.empty()) throw DataError("export of an empty slice set");
  const int length = slices.front().length();
  const uint64_t schema = schema_hash(slices.front());
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kFormatVersion);
  w.pod(static_cast<int32_t>(length));
  w.pod(schema);
  w.str(experiment_id);
  w.pod(static_cast<uint32_t>(slices.size()));
  for (const auto& s : slices) {
    if (s.length() != length || schema_hash(s) != schema)
      throw DataError("export mixes slice schemas");
    auto payload = serialize_slice(s);
    w.pod(static_cast<uint32_t>(payload.size()));
    w.pod(crc32(payload.data(), payload.size()));
    w.raw(payload.data(), payload.size());
  }
  report::write_bytes(path, w.buf);
  return slices.size();
}

DatasetFile import_dataset(const std::string& path) {
  auto bytes = report::read_bytes(path);
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a dataset file: " + path);
  uint32_t version = r.pod<uint32_t>();
  if (version != kFormatVersion)
    throw DataError("unsupported dataset version " + std::to_string(version));
  DatasetFile f;
  f.path = path;
  f.slice_length = r.pod<int32_t>();
  f.schema = r.pod<uint64_t>();
  f.experiment_id = r.str();
  uint32_t count = r.pod<uint32_t>();
  f.slices.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t size = 0, crc = 0;
    std::vector<uint8_t> payload;
    try {
      size = r.pod<uint32_t>();
      crc = r.pod<uint32_t>();
      payload.resize(size);
      r.raw(payload.data(), size);
    } catch (const DataError&) {
      ++f.skipped_records;  // truncated tail frame
      break;
    }
    if (crc32(payload.data(), size) != crc) {
      ++f.skipped_records;
      continue;
    }
    auto slice = deserialize_slice(payload);
    if (slice.length() != f.slice_length || schema_hash(slice) != f.schema) {
      ++f.skipped_records;
      continue;
    }
    f.slices.push_back(std::move(slice));
  }
  return f;
}

std::vector<TrajectorySlice> sample_batch(ReplayBuffer& online,
                                          const std::vector<DatasetFile>& offline,
                                          double mix_ratio, size_t n, Rng& rng) {
  if (mix_ratio < 0.0 || mix_ratio > 1.0) throw ConfigError("mix_ratio outside [0,1]");
  size_t n_offline = static_cast<size_t>(std::ceil(mix_ratio * static_cast<double>(n)));
  n_offline = std::min(n_offline, n);
  size_t n_online = n - n_offline;

  std::vector<TrajectorySlice> batch;
  batch.reserve(n);
  if (n_offline > 0) {
    size_t total = 0;
    for (const auto& f : offline) {
      if (online.expected_length() >= 0 && !f.slices.empty() &&
          (f.slice_length != online.expected_length() ||
           f.schema != online.expected_schema()))
        throw DataError("incompatible dataset: " + f.path);
      total += f.slices.size();
    }
    if (total == 0) throw DataError("replay underflow: no offline records");
    for (size_t i = 0; i < n_offline; ++i) {
      size_t idx = static_cast<size_t>(rng.uniform_int(total));
      for (const auto& f : offline) {
        if (idx < f.slices.size()) {
          batch.push_back(f.slices[idx]);
          break;
        }
        idx -= f.slices.size();
      }
    }
  }
  if (n_online > 0) {
    auto drawn = online.sample(rng, n_online);
    std::move(drawn.begin(), drawn.end(), std::back_inserter(batch));
  }
  return batch;
}

}  // namespace pitchlab::replay
