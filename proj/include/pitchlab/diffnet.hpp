#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pitchlab/common.hpp"
#include "pitchlab/rng.hpp"

namespace pitchlab::diffnet {

template <typename T>
struct BasicArray {
  std::vector<int> shape;
  std::vector<T> data;

  static BasicArray zeros(std::vector<int> shape) {
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw NetError("array dimension must be positive");
      n *= static_cast<size_t>(d);
    }
    BasicArray a;
    a.shape = std::move(shape);
    a.data.assign(n, T(0));
    return a;
  }
  size_t size() const { return data.size(); }
};

using ArrayValue = BasicArray<float>;

// Named parameter store. Insertion order is the canonical order for
// serialization, reductions and norms, so results do not depend on map
// iteration quirks. float is the trained precision; the double instantiation
// backs the finite-difference oracles.
template <typename T>
class BasicParameterSet {
 public:
  BasicArray<T>& add(const std::string& name, std::vector<int> shape) {
    if (values_.count(name)) throw NetError("duplicate parameter: " + name);
    names_.push_back(name);
    auto [it, ok] = values_.emplace(name, BasicArray<T>::zeros(std::move(shape)));
    (void)ok;
    return it->second;
  }
  BasicArray<T>& at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw NetError("unknown parameter: " + name);
    return it->second;
  }
  const BasicArray<T>& at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw NetError("unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return values_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  size_t total_size() const {
    size_t n = 0;
    for (const auto& name : names_) n += values_.at(name).size();
    return n;
  }

  uint64_t version() const { return version_; }
  void bump_version() { ++version_; }
  void set_version(uint64_t v) { version_ = v; }

  BasicParameterSet zeros_like() const {
    BasicParameterSet out;
    for (const auto& name : names_) out.add(name, values_.at(name).shape);
    return out;
  }
  void zero() {
    for (const auto& name : names_) {
      auto& v = values_.at(name).data;
      std::fill(v.begin(), v.end(), T(0));
    }
  }
  // this += other * s, matched name-by-name.
  void add_scaled(const BasicParameterSet& other, T s) {
    for (const auto& name : names_) {
      auto& dst = values_.at(name).data;
      const auto& src = other.at(name).data;
      if (src.size() != dst.size()) throw NetError("shape mismatch in add_scaled: " + name);
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
    }
  }
  void scale(T s) {
    for (const auto& name : names_)
      for (auto& x : values_.at(name).data) x *= s;
  }
  double global_norm() const {
    double acc = 0.0;
    for (const auto& name : names_)
      for (T x : values_.at(name).data) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
  }
  uint64_t fingerprint() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, size_t n) {
      const auto* b = static_cast<const uint8_t*>(p);
      for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ull;
      }
    };
    for (const auto& name : names_) {
      mix(name.data(), name.size());
      const auto& a = values_.at(name);
      for (int d : a.shape) mix(&d, sizeof(d));
      mix(a.data.data(), a.data.size() * sizeof(T));
    }
    return h;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, BasicArray<T>> values_;
  uint64_t version_ = 0;
};

using ParameterSet = BasicParameterSet<float>;

template <typename To, typename From>
BasicParameterSet<To> cast_params(const BasicParameterSet<From>& src) {
  BasicParameterSet<To> out;
  for (const auto& name : src.names()) {
    const auto& a = src.at(name);
    auto& b = out.add(name, a.shape);
    for (size_t i = 0; i < a.data.size(); ++i) b.data[i] = static_cast<To>(a.data[i]);
  }
  out.set_version(src.version());
  return out;
}

// Checkpoint container: magic "PSNAP", version, name table, then shape +
// float32 payload per parameter. Round trips bit-exactly.
std::vector<uint8_t> serialize_params(const ParameterSet& p);
ParameterSet deserialize_params(const std::vector<uint8_t>& bytes);
void save_params(const std::string& path, const ParameterSet& p);
ParameterSet load_params(const std::string& path);

// Fan-in scaled uniform init.
template <typename T>
void init_uniform(BasicArray<T>& a, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  for (auto& x : a.data) x = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Kernels. Templated on the scalar type: float is the production path, the
// double instantiation exists so finite-difference oracles are not drowned in
// rounding noise. The unsuffixed versions carry OpenMP pragmas over
// independent output elements (bitwise equal to the _ref serial twins).
// ---------------------------------------------------------------------------

// 3x3 same-padding convolution, CHW layout, kernel [cout][cin][3][3].
template <typename T>
void conv3x3_forward_ref(const T* in, int cin, int h, int w, const T* kernel, const T* bias,
                         int cout, T* out) {
  for (int co = 0; co < cout; ++co) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T acc = bias[co];
        for (int ci = 0; ci < cin; ++ci) {
          const T* plane = in + ci * h * w;
          const T* k = kernel + ((co * cin + ci) * 9);
          for (int dy = -1; dy <= 1; ++dy) {
            int yy = y + dy;
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              int xx = x + dx;
              if (xx < 0 || xx >= w) continue;
              acc += plane[yy * w + xx] * k[(dy + 1) * 3 + (dx + 1)];
            }
          }
        }
        out[(co * h + y) * w + x] = acc;
      }
    }
  }
}

template <typename T>
void conv3x3_forward(const T* in, int cin, int h, int w, const T* kernel, const T* bias,
                     int cout, T* out) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < cout; ++co) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T acc = bias[co];
        for (int ci = 0; ci < cin; ++ci) {
          const T* plane = in + ci * h * w;
          const T* k = kernel + ((co * cin + ci) * 9);
          for (int dy = -1; dy <= 1; ++dy) {
            int yy = y + dy;
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              int xx = x + dx;
              if (xx < 0 || xx >= w) continue;
              acc += plane[yy * w + xx] * k[(dy + 1) * 3 + (dx + 1)];
            }
          }
        }
        out[(co * h + y) * w + x] = acc;
      }
    }
  }
}

// Accumulates into dkernel/dbias/din; din may be null for the input layer.
template <typename T>
void conv3x3_backward_ref(const T* in, int cin, int h, int w, const T* kernel, int cout,
                          const T* dout, T* dkernel, T* dbias, T* din) {
  for (int co = 0; co < cout; ++co) {
    const T* dplane = dout + co * h * w;
    T db = 0;
    for (int i = 0; i < h * w; ++i) db += dplane[i];
    dbias[co] += db;
    for (int ci = 0; ci < cin; ++ci) {
      const T* plane = in + ci * h * w;
      T* dk = dkernel + ((co * cin + ci) * 9);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          T acc = 0;
          int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
              acc += plane[(y + dy) * w + (x + dx)] * dplane[y * w + x];
          dk[(dy + 1) * 3 + (dx + 1)] += acc;
        }
      }
    }
  }
  if (!din) return;
  for (int ci = 0; ci < cin; ++ci) {
    T* dplane_in = din + ci * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T acc = 0;
        for (int co = 0; co < cout; ++co) {
          const T* dplane = dout + co * h * w;
          const T* k = kernel + ((co * cin + ci) * 9);
          for (int dy = -1; dy <= 1; ++dy) {
            int yy = y - dy;  // transposed correlation
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              int xx = x - dx;
              if (xx < 0 || xx >= w) continue;
              acc += dplane[yy * w + xx] * k[(dy + 1) * 3 + (dx + 1)];
            }
          }
        }
        dplane_in[y * w + x] += acc;
      }
    }
  }
}

template <typename T>
void conv3x3_backward(const T* in, int cin, int h, int w, const T* kernel, int cout,
                      const T* dout, T* dkernel, T* dbias, T* din) {
#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    const T* dplane = dout + co * h * w;
    T db = 0;
    for (int i = 0; i < h * w; ++i) db += dplane[i];
    dbias[co] += db;
    for (int ci = 0; ci < cin; ++ci) {
      const T* plane = in + ci * h * w;
      T* dk = dkernel + ((co * cin + ci) * 9);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          T acc = 0;
          int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
              acc += plane[(y + dy) * w + (x + dx)] * dplane[y * w + x];
          dk[(dy + 1) * 3 + (dx + 1)] += acc;
        }
      }
    }
  }
  if (!din) return;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    T* dplane_in = din + ci * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T acc = 0;
        for (int co = 0; co < cout; ++co) {
          const T* dplane = dout + co * h * w;
          const T* k = kernel + ((co * cin + ci) * 9);
          for (int dy = -1; dy <= 1; ++dy) {
            int yy = y - dy;
            if (yy < 0 || yy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              int xx = x - dx;
              if (xx < 0 || xx >= w) continue;
              acc += dplane[yy * w + xx] * k[(dy + 1) * 3 + (dx + 1)];
            }
          }
        }
        dplane_in[y * w + x] += acc;
      }
    }
  }
}

// 2x2 max pooling, stride 2; trailing odd row/column dropped. argmax records
// the flat input index that won each output cell.
template <typename T>
void maxpool2_forward(const T* in, int c, int h, int w, T* out, int* argmax) {
  int oh = h / 2, ow = w / 2;
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = in + ci * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        int base = (2 * y) * w + 2 * x;
        int best = base;
        T bv = plane[base];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int idx = (2 * y + dy) * w + (2 * x + dx);
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        out[(ci * oh + y) * ow + x] = bv;
        argmax[(ci * oh + y) * ow + x] = ci * h * w + best;
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const int* argmax, int c, int oh, int ow, const T* dout, T* din) {
  for (int i = 0; i < c * oh * ow; ++i) din[argmax[i]] += dout[i];
}

template <typename T>
void relu_forward(const T* in, int n, T* out) {
  for (int i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

// dx += dout where the forward OUTPUT was positive.
template <typename T>
void relu_backward(const T* out, const T* dout, int n, T* dx) {
  for (int i = 0; i < n; ++i)
    if (out[i] > T(0)) dx[i] += dout[i];
}

// Dense layer, weights [nout][nin].
template <typename T>
void dense_forward(const T* in, int nin, const T* w, const T* b, int nout, T* out) {
  for (int o = 0; o < nout; ++o) {
    T acc = b[o];
    const T* row = w + o * nin;
    for (int i = 0; i < nin; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

template <typename T>
void dense_backward(const T* in, int nin, const T* w, int nout, const T* dout, T* dw, T* db,
                    T* din) {
  for (int o = 0; o < nout; ++o) {
    db[o] += dout[o];
    T* dwr = dw + o * nin;
    for (int i = 0; i < nin; ++i) dwr[i] += dout[o] * in[i];
  }
  if (!din) return;
  for (int i = 0; i < nin; ++i) {
    T acc = 0;
    for (int o = 0; o < nout; ++o) acc += w[o * nin + i] * dout[o];
    din[i] += acc;
  }
}

template <typename T>
void softmax(const T* logits, int n, T* probs) {
  T mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  T sum = 0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= sum;
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T softplus(T x) {
  // Overflow-safe: max(x, 0) + log1p(exp(-|x|)).
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
struct RecurrentState {
  std::vector<T> h, c;
  static RecurrentState zero(int width) {
    return {std::vector<T>(width, T(0)), std::vector<T>(width, T(0))};
  }
};

template <typename T>
struct LstmCache {
  std::vector<T> x, h_prev, c_prev;
  std::vector<T> gates;   // post-activation [i f g o] * width
  std::vector<T> c, tanh_c;
};

// Gated update: z = W [x; h] + b, i,f,o = sigmoid, g = tanh,
// c' = f*c + i*g, h' = o * tanh(c'). W is [4*width][nin + width].
template <typename T>
void lstm_forward(const T* x, int nin, const RecurrentState<T>& st, const T* w, const T* b,
                  int width, RecurrentState<T>* out, LstmCache<T>* cache) {
  const int cols = nin + width;
  std::vector<T> z(4 * width);
  for (int r = 0; r < 4 * width; ++r) {
    T acc = b[r];
    const T* row = w + r * cols;
    for (int i = 0; i < nin; ++i) acc += row[i] * x[i];
    for (int i = 0; i < width; ++i) acc += row[nin + i] * st.h[i];
    z[r] = acc;
  }
  out->h.resize(width);
  out->c.resize(width);
  if (cache) {
    cache->x.assign(x, x + nin);
    cache->h_prev = st.h;
    cache->c_prev = st.c;
    cache->gates.resize(4 * width);
    cache->c.resize(width);
    cache->tanh_c.resize(width);
  }
  for (int j = 0; j < width; ++j) {
    T ig = sigmoid(z[j]);
    T fg = sigmoid(z[width + j]);
    T gg = std::tanh(z[2 * width + j]);
    T og = sigmoid(z[3 * width + j]);
    T c = fg * st.c[j] + ig * gg;
    T tc = std::tanh(c);
    out->c[j] = c;
    out->h[j] = og * tc;
    if (cache) {
      cache->gates[j] = ig;
      cache->gates[width + j] = fg;
      cache->gates[2 * width + j] = gg;
      cache->gates[3 * width + j] = og;
      cache->c[j] = c;
      cache->tanh_c[j] = tc;
    }
  }
}

// dh/dc are gradients w.r.t. this step's outputs; dh_prev/dc_prev receive the
// gradients flowing to the previous step. dw/db accumulate.
template <typename T>
void lstm_backward(const T* w, int nin, int width, const LstmCache<T>& cache, const T* dh,
                   const T* dc, T* dw, T* db, T* dx, T* dh_prev, T* dc_prev) {
  const int cols = nin + width;
  std::vector<T> dz(4 * width);
  for (int j = 0; j < width; ++j) {
    T ig = cache.gates[j], fg = cache.gates[width + j];
    T gg = cache.gates[2 * width + j], og = cache.gates[3 * width + j];
    T tc = cache.tanh_c[j];
    T dcj = dc[j] + dh[j] * og * (T(1) - tc * tc);
    dz[j] = dcj * gg * ig * (T(1) - ig);
    dz[width + j] = dcj * cache.c_prev[j] * fg * (T(1) - fg);
    dz[2 * width + j] = dcj * ig * (T(1) - gg * gg);
    dz[3 * width + j] = dh[j] * tc * og * (T(1) - og);
    dc_prev[j] += dcj * fg;
  }
  for (int r = 0; r < 4 * width; ++r) {
    const T g = dz[r];
    T* dwr = dw + r * cols;
    for (int i = 0; i < nin; ++i) dwr[i] += g * cache.x[i];
    for (int i = 0; i < width; ++i) dwr[nin + i] += g * cache.h_prev[i];
    db[r] += g;
  }
  for (int i = 0; i < nin; ++i) {
    T acc = 0;
    for (int r = 0; r < 4 * width; ++r) acc += w[r * cols + i] * dz[r];
    if (dx) dx[i] += acc;
  }
  for (int i = 0; i < width; ++i) {
    T acc = 0;
    for (int r = 0; r < 4 * width; ++r) acc += w[r * cols + nin + i] * dz[r];
    dh_prev[i] += acc;
  }
}

// ---------------------------------------------------------------------------
// Distributions and optimizers (production precision only).
// ---------------------------------------------------------------------------

struct GaussianActionDistribution {
  std::vector<double> mean;
  std::vector<double> stddev;  // >= the softplus floor by construction

  double log_prob(const std::vector<double>& a) const;
  std::vector<double> sample(Rng& rng) const;
};

// Decoupled diagonal-Gaussian KLs: the mean term holds the old covariance
// fixed, the covariance term holds the means equal.
double kl_mean_term(const GaussianActionDistribution& old_d,
                    const GaussianActionDistribution& new_d);
double kl_cov_term(const GaussianActionDistribution& old_d,
                   const GaussianActionDistribution& new_d);
double kl_full(const GaussianActionDistribution& a, const GaussianActionDistribution& b);

template <typename T>
class BasicAdam {
 public:
  explicit BasicAdam(const BasicParameterSet<T>& params, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8)
      : m_(params.zeros_like()), v_(params.zeros_like()), beta1_(beta1), beta2_(beta2),
        eps_(eps) {}
  // Applies one update. clip_norm <= 0 disables clipping. Throws NetError
  // naming the parameter on non-finite gradients.
  void update(BasicParameterSet<T>& params, const BasicParameterSet<T>& grads, double lr,
              double clip_norm) {
    double norm_sq = 0.0;
    for (const auto& name : params.names()) {
      const auto& g = grads.at(name).data;
      for (T x : g) {
        if (!std::isfinite(static_cast<double>(x)))
          throw NetError("optimizer fault: non-finite gradient for " + name);
        norm_sq += static_cast<double>(x) * x;
      }
    }
    double scale = 1.0;
    double norm = std::sqrt(norm_sq);
    if (clip_norm > 0.0 && norm > clip_norm) scale = clip_norm / norm;

    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (const auto& name : params.names()) {
      auto& p = params.at(name).data;
      const auto& g = grads.at(name).data;
      auto& m = m_.at(name).data;
      auto& v = v_.at(name).data;
      if (g.size() != p.size()) throw NetError("shape mismatch in optimizer: " + name);
      for (size_t i = 0; i < p.size(); ++i) {
        double gi = static_cast<double>(g[i]) * scale;
        double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
        double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        p[i] = static_cast<T>(p[i] - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }
  int64_t step() const { return step_; }

 private:
  BasicParameterSet<T> m_, v_;
  double beta1_, beta2_, eps_;
  int64_t step_ = 0;
};

using Adam = BasicAdam<float>;

struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  // Returns the increment to apply (descent direction: subtract).
  double update(double grad, double lr);
};

}  // namespace pitchlab::diffnet
