#include "pitchlab/diffnet.hpp"

#include <algorithm>
#include <cmath>

#include "pitchlab/report.hpp"

namespace pitchlab::diffnet {

static constexpr char kMagic[5] = {'P', 'S', 'N', 'A', 'P'};
static constexpr uint32_t kFormatVersion = 1;

std::vector<uint8_t> serialize_params(const ParameterSet& p) {
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod(kFormatVersion);
  w.pod(p.version());
  w.pod(static_cast<uint32_t>(p.names().size()));
  for (const auto& name : p.names()) w.str(name);
  for (const auto& name : p.names()) {
    const auto& a = p.at(name);
    w.pod(static_cast<uint32_t>(a.shape.size()));
    for (int d : a.shape) w.pod(static_cast<int32_t>(d));
    w.raw(a.data.data(), a.data.size() * sizeof(float));
  }
  return std::move(w.buf);
}

ParameterSet deserialize_params(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char magic[5];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("bad parameter snapshot magic");
  auto fmt = r.pod<uint32_t>();
  if (fmt != kFormatVersion) throw DataError("unsupported parameter snapshot version");
  auto version = r.pod<uint64_t>();
  auto count = r.pod<uint32_t>();
  std::vector<std::string> names(count);
  for (auto& n : names) n = r.str();
  ParameterSet p;
  for (const auto& name : names) {
    auto rank = r.pod<uint32_t>();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = r.pod<int32_t>();
    auto& a = p.add(name, shape);
    r.raw(a.data.data(), a.data.size() * sizeof(float));
  }
  p.set_version(version);
  if (!r.done()) throw DataError("trailing bytes in parameter snapshot");
  return p;
}

void save_params(const std::string& path, const ParameterSet& p) {
  report::write_bytes(path, serialize_params(p));
}

ParameterSet load_params(const std::string& path) { return deserialize_params(report::read_bytes(path)); }

double GaussianActionDistribution::log_prob(const std::vector<double>& a) const {
  if (a.size() != mean.size()) throw NetError("action dimension mismatch in log_prob");
  constexpr double kLogSqrt2Pi = 0.9189385332046727;
  double lp = 0.0;
  for (size_t i = 0; i < mean.size(); ++i) {
    double z = (a[i] - mean[i]) / stddev[i];
    lp += -0.5 * z * z - std::log(stddev[i]) - kLogSqrt2Pi;
  }
  return lp;
}

std::vector<double> GaussianActionDistribution::sample(Rng& rng) const {
  std::vector<double> a(mean.size());
  for (size_t i = 0; i < mean.size(); ++i) a[i] = mean[i] + stddev[i] * rng.normal();
  return a;
}

double kl_mean_term(const GaussianActionDistribution& old_d,
                    const GaussianActionDistribution& new_d) {
  double acc = 0.0;
  for (size_t i = 0; i < old_d.mean.size(); ++i) {
    double d = new_d.mean[i] - old_d.mean[i];
    acc += d * d / (old_d.stddev[i] * old_d.stddev[i]);
  }
  return 0.5 * acc;
}

double kl_cov_term(const GaussianActionDistribution& old_d,
                   const GaussianActionDistribution& new_d) {
  double acc = 0.0;
  for (size_t i = 0; i < old_d.stddev.size(); ++i) {
    double r = old_d.stddev[i] / new_d.stddev[i];
    acc += r * r - 1.0 + 2.0 * std::log(new_d.stddev[i] / old_d.stddev[i]);
  }
  return 0.5 * acc;
}

double kl_full(const GaussianActionDistribution& a, const GaussianActionDistribution& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.mean.size(); ++i) {
    double r = a.stddev[i] / b.stddev[i];
    double d = (a.mean[i] - b.mean[i]) / b.stddev[i];
    acc += r * r + d * d - 1.0 + 2.0 * std::log(b.stddev[i] / a.stddev[i]);
  }
  return 0.5 * acc;
}

double ScalarAdam::update(double grad, double lr) {
  if (!std::isfinite(grad)) throw NetError("optimizer fault: non-finite gradient for scalar dual");
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad * grad;
  double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(step)));
  double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(step)));
  return lr * mhat / (std::sqrt(vhat) + eps);
}

}  // namespace pitchlab::diffnet
