#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "glass/error.hpp"
#include "glass/numerics.hpp"

namespace glass {

// Hashed character-trigram counts over the normalized caption.
struct TextFeatures {
  std::map<int, double> counts;  // bucket -> count
  int buckets = 0;
};

inline std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// Bucket index = FNV-1a 64 of the trigram, mod B. Strings shorter than three
// characters hash as a single whole-string feature.
inline TextFeatures featurize_text(std::string_view caption, int buckets) {
  require(buckets >= 1, errc::invalid_argument, "bucket count must be >= 1");
  const std::string norm = normalize_text(caption);
  require(!norm.empty(), errc::empty_caption, "caption is empty after normalization");
  TextFeatures f;
  f.buckets = buckets;
  if (norm.size() < 3) {
    f.counts[static_cast<int>(fnv1a64(norm) % static_cast<std::uint64_t>(buckets))] += 1.0;
    return f;
  }
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
    const std::string_view tri(norm.data() + i, 3);
    f.counts[static_cast<int>(fnv1a64(tri) % static_cast<std::uint64_t>(buckets))] += 1.0;
  }
  return f;
}

struct EncoderDims {
  int text_buckets = 512;  // B
  int image_dim = 32;      // D
  int embed_dim = 32;      // L
  int hidden = 0;          // 0 = linear towers; >0 = one tanh hidden layer
};

inline bool operator==(const EncoderDims& a, const EncoderDims& b) {
  return a.text_buckets == b.text_buckets && a.image_dim == b.image_dim &&
         a.embed_dim == b.embed_dim && a.hidden == b.hidden;
}

// Trainable projections for the two towers. Linear mode uses text_w1/image_w1
// as the (input x L) projections with text_b1/image_b1 biases; hidden mode
// inserts a tanh layer so *_w1 is (input x H) and *_w2 is (H x L).
struct EncoderParams {
  EncoderDims dims;
  std::vector<double> text_w1, text_b1, text_w2, text_b2;
  std::vector<double> image_w1, image_b1, image_w2, image_b2;

  std::size_t total_size() const {
    return text_w1.size() + text_b1.size() + text_w2.size() + text_b2.size() +
           image_w1.size() + image_b1.size() + image_w2.size() + image_b2.size();
  }
};

inline EncoderParams init_params(const EncoderDims& dims, Rng& rng) {
  require(dims.text_buckets >= 1 && dims.image_dim >= 1 && dims.embed_dim >= 1,
          errc::invalid_argument, "encoder dims must be >= 1");
  require(dims.hidden >= 0, errc::invalid_argument, "hidden size must be >= 0");
  EncoderParams p;
  p.dims = dims;
  auto fill = [&rng](std::vector<double>& w, int rows, int cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    w.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (double& v : w) v = scale * rng.next_normal();
  };
  const int out1 = dims.hidden > 0 ? dims.hidden : dims.embed_dim;
  fill(p.text_w1, dims.text_buckets, out1);
  p.text_b1.assign(static_cast<std::size_t>(out1), 0.0);
  fill(p.image_w1, dims.image_dim, out1);
  p.image_b1.assign(static_cast<std::size_t>(out1), 0.0);
  if (dims.hidden > 0) {
    fill(p.text_w2, dims.hidden, dims.embed_dim);
    p.text_b2.assign(static_cast<std::size_t>(dims.embed_dim), 0.0);
    fill(p.image_w2, dims.hidden, dims.embed_dim);
    p.image_b2.assign(static_cast<std::size_t>(dims.embed_dim), 0.0);
  }
  return p;
}

namespace detail {

// Per-encode intermediates kept for backprop. Owns its inputs so callers may
// discard the features right after encoding.
struct TowerCache {
  std::vector<double> input_dense;   // image path
  TextFeatures input_sparse;         // text path
  bool is_sparse = false;
  std::vector<double> hidden_pre;    // before tanh (hidden mode)
  std::vector<double> hidden_act;    // after tanh
  std::vector<double> pre;           // before normalization
  double pre_norm = 0.0;
  Embedding out;
};

inline void affine_sparse(const TextFeatures& f, const std::vector<double>& w,
                          const std::vector<double>& b, std::vector<double>& out) {
  const std::size_t cols = b.size();
  out = b;
  for (const auto& [idx, cnt] : f.counts) {
    const double* row = w.data() + static_cast<std::size_t>(idx) * cols;
    for (std::size_t k = 0; k < cols; ++k) out[k] += cnt * row[k];
  }
}

inline void affine_dense(const std::vector<double>& x, const std::vector<double>& w,
                         const std::vector<double>& b, std::vector<double>& out) {
  const std::size_t cols = b.size();
  out = b;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double v = x[r];
    if (v == 0.0) continue;
    const double* row = w.data() + r * cols;
    for (std::size_t k = 0; k < cols; ++k) out[k] += v * row[k];
  }
}

inline void finish_tower(const EncoderDims& dims, const std::vector<double>& w2,
                         const std::vector<double>& b2, TowerCache& cache) {
  if (dims.hidden > 0) {
    cache.hidden_pre = cache.pre;
    cache.hidden_act.resize(cache.hidden_pre.size());
    for (std::size_t k = 0; k < cache.hidden_pre.size(); ++k)
      cache.hidden_act[k] = std::tanh(cache.hidden_pre[k]);
    affine_dense(cache.hidden_act, w2, b2, cache.pre);
  }
  cache.pre_norm = norm(cache.pre);
  require(cache.pre_norm >= kZeroNormEps, errc::zero_norm_vector,
          "encoder produced a (near-)zero vector before normalization");
  cache.out.resize(cache.pre.size());
  for (std::size_t k = 0; k < cache.pre.size(); ++k) cache.out[k] = cache.pre[k] / cache.pre_norm;
}

}  // namespace detail

inline Embedding encode_text(const TextFeatures& f, const EncoderParams& p,
                             detail::TowerCache* cache_out = nullptr) {
  require(f.buckets == p.dims.text_buckets, errc::dim_mismatch,
          "feature buckets do not match encoder dims");
  detail::TowerCache cache;
  if (cache_out) {
    cache.input_sparse = f;
    cache.is_sparse = true;
  }
  detail::affine_sparse(f, p.text_w1, p.text_b1, cache.pre);
  detail::finish_tower(p.dims, p.text_w2, p.text_b2, cache);
  Embedding out = cache.out;
  if (cache_out) *cache_out = std::move(cache);
  return out;
}

inline Embedding encode_image(const std::vector<double>& features, const EncoderParams& p,
                              detail::TowerCache* cache_out = nullptr) {
  require(static_cast<int>(features.size()) == p.dims.image_dim, errc::dim_mismatch,
          "image feature dim does not match encoder dims");
  detail::TowerCache cache;
  cache.input_dense = features;
  detail::affine_dense(features, p.image_w1, p.image_b1, cache.pre);
  detail::finish_tower(p.dims, p.image_w2, p.image_b2, cache);
  Embedding out = cache.out;
  if (cache_out) *cache_out = std::move(cache);
  return out;
}

// Gradient accumulator with the exact parameter shapes.
struct ParamGrads {
  EncoderDims dims;
  std::vector<double> text_w1, text_b1, text_w2, text_b2;
  std::vector<double> image_w1, image_b1, image_w2, image_b2;

  explicit ParamGrads(const EncoderParams& p) : dims(p.dims) {
    text_w1.assign(p.text_w1.size(), 0.0);
    text_b1.assign(p.text_b1.size(), 0.0);
    text_w2.assign(p.text_w2.size(), 0.0);
    text_b2.assign(p.text_b2.size(), 0.0);
    image_w1.assign(p.image_w1.size(), 0.0);
    image_b1.assign(p.image_b1.size(), 0.0);
    image_w2.assign(p.image_w2.size(), 0.0);
    image_b2.assign(p.image_b2.size(), 0.0);
  }

  double l2_norm() const {
    double acc = 0.0;
    for (const auto* v :
         {&text_w1, &text_b1, &text_w2, &text_b2, &image_w1, &image_b1, &image_w2, &image_b2}) {
      for (double x : *v) acc += x * x;
    }
    return std::sqrt(acc);
  }
};

namespace detail {

// Backprop through y = x/|x|: dL/dx = (dL/dy - y (y . dL/dy)) / |x|.
inline std::vector<double> normalize_backward(const TowerCache& cache, const Embedding& grad_out) {
  const std::size_t l = cache.out.size();
  double proj = 0.0;
  for (std::size_t k = 0; k < l; ++k) proj += cache.out[k] * grad_out[k];
  std::vector<double> g(l);
  for (std::size_t k = 0; k < l; ++k)
    g[k] = (grad_out[k] - cache.out[k] * proj) / cache.pre_norm;
  return g;
}

inline void tower_backward(const EncoderDims& dims, const TowerCache& cache,
                           const Embedding& grad_out, const std::vector<double>& w2,
                           std::vector<double>& gw1, std::vector<double>& gb1,
                           std::vector<double>& gw2, std::vector<double>& gb2) {
  std::vector<double> g = normalize_backward(cache, grad_out);

  if (dims.hidden > 0) {
    const std::size_t h = cache.hidden_act.size();
    const std::size_t l = g.size();
    // pre = w2^T hidden_act + b2
    for (std::size_t k = 0; k < l; ++k) gb2[k] += g[k];
    std::vector<double> gh(h, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      const double a = cache.hidden_act[r];
      double acc = 0.0;
      const double* row = w2.data() + r * l;
      double* grow = gw2.data() + r * l;
      for (std::size_t k = 0; k < l; ++k) {
        grow[k] += a * g[k];
        acc += row[k] * g[k];
      }
      gh[r] = acc * (1.0 - a * a);  // through tanh
    }
    g = std::move(gh);
  }

  const std::size_t cols = g.size();
  for (std::size_t k = 0; k < cols; ++k) gb1[k] += g[k];
  if (cache.is_sparse) {
    for (const auto& [idx, cnt] : cache.input_sparse.counts) {
      double* row = gw1.data() + static_cast<std::size_t>(idx) * cols;
      for (std::size_t k = 0; k < cols; ++k) row[k] += cnt * g[k];
    }
  } else {
    for (std::size_t r = 0; r < cache.input_dense.size(); ++r) {
      const double v = cache.input_dense[r];
      if (v == 0.0) continue;
      double* row = gw1.data() + r * cols;
      for (std::size_t k = 0; k < cols; ++k) row[k] += v * g[k];
    }
  }
}

}  // namespace detail

inline void backprop_text(const detail::TowerCache& cache, const Embedding& grad_out,
                          const EncoderParams& p, ParamGrads& grads) {
  detail::tower_backward(p.dims, cache, grad_out, p.text_w2, grads.text_w1, grads.text_b1,
                         grads.text_w2, grads.text_b2);
}

inline void backprop_image(const detail::TowerCache& cache, const Embedding& grad_out,
                           const EncoderParams& p, ParamGrads& grads) {
  detail::tower_backward(p.dims, cache, grad_out, p.image_w2, grads.image_w1, grads.image_b1,
                         grads.image_w2, grads.image_b2);
}

inline void apply_gradient_step(EncoderParams& p, const ParamGrads& g, double lr) {
  auto step = [lr](std::vector<double>& w, const std::vector<double>& gw) {
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * gw[k];
  };
  step(p.text_w1, g.text_w1);
  step(p.text_b1, g.text_b1);
  step(p.text_w2, g.text_w2);
  step(p.text_b2, g.text_b2);
  step(p.image_w1, g.image_w1);
  step(p.image_b1, g.image_b1);
  step(p.image_w2, g.image_w2);
  step(p.image_b2, g.image_b2);
}

}  // namespace glass
