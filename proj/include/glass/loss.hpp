#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "glass/error.hpp"
#include "glass/numerics.hpp"

namespace glass {

// M groups of N aligned image/text embedding pairs. images[i] and texts[i]
// at the same index are a positive pair within their group.
struct Group {
  std::string group_id;
  std::vector<Embedding> images;
  std::vector<Embedding> texts;
};

struct GroupBatch {
  std::vector<Group> groups;
};

struct BatchDims {
  std::size_t m = 0;  // groups
  std::size_t n = 0;  // pairs per group
  std::size_t l = 0;  // embedding dim
};

inline BatchDims validate_batch(const GroupBatch& batch) {
  require(!batch.groups.empty(), errc::empty_group, "batch has no groups");
  BatchDims d;
  d.m = batch.groups.size();
  d.n = batch.groups[0].images.size();
  require(d.n >= 1, errc::empty_group, "group has no pairs");
  d.l = batch.groups[0].images.empty() ? 0 : batch.groups[0].images[0].size();
  require(d.l >= 1, errc::dim_mismatch, "zero-dimensional embeddings");
  for (const Group& g : batch.groups) {
    require(g.images.size() == d.n && g.texts.size() == d.n, errc::dim_mismatch,
            "all groups must have the same pair count");
    for (std::size_t i = 0; i < d.n; ++i) {
      require(g.images[i].size() == d.l && g.texts[i].size() == d.l, errc::dim_mismatch,
              "mixed embedding dims in batch");
      require(all_finite(g.images[i]) && all_finite(g.texts[i]), errc::invalid_argument,
              "non-finite embedding entry in batch");
    }
  }
  return d;
}

struct LossConfig {
  double tau = 0.1;        // outer temperature
  double tau_inner = 0.1;  // inner temperature (defaults to tau's paper value)
  double alpha = 0.7;      // inner/outer mix
  bool stop_gradient_centroids = false;  // ablation: treat inner-loss centroids as constants
};

inline void validate_config(const LossConfig& cfg) {
  require(cfg.tau > 0.0 && std::isfinite(cfg.tau), errc::invalid_argument, "tau must be > 0");
  require(cfg.tau_inner > 0.0 && std::isfinite(cfg.tau_inner), errc::invalid_argument,
          "tau_inner must be > 0");
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, errc::invalid_argument, "alpha must be in [0,1]");
}

// Loss value plus gradients with the exact shape of the batch:
// grad_images[g][i] is dL/dI_{g,i}, grad_texts[g][i] is dL/dT_{g,i}.
// infonce_loss returns its K pairs as a single group: grads are [1][K].
struct LossOutput {
  double value = 0.0;
  std::vector<std::vector<Embedding>> grad_images;
  std::vector<std::vector<Embedding>> grad_texts;
};

namespace detail {

inline std::vector<std::vector<Embedding>> zero_grads(std::size_t m, std::size_t n,
                                                      std::size_t l) {
  return std::vector<std::vector<Embedding>>(m, std::vector<Embedding>(n, Embedding(l, 0.0)));
}

struct NormCache {
  std::vector<double> norms;
  std::vector<Embedding> units;
};

inline NormCache norm_cache(const std::vector<const Embedding*>& xs, const char* what) {
  NormCache c;
  c.norms.reserve(xs.size());
  c.units.reserve(xs.size());
  for (const Embedding* x : xs) {
    double n = norm(*x);
    require(n >= kZeroNormEps, errc::zero_norm_vector,
            std::string("degenerate ") + what + " (norm below 1e-12)");
    c.norms.push_back(n);
    Embedding u(*x);
    for (double& v : u) v /= n;
    c.units.push_back(std::move(u));
  }
  return c;
}

// d cos(x,y)/dx = (y_unit - cos * x_unit) / |x|, accumulated with weight w.
inline void add_cosine_grad_x(double w, double cosv, const Embedding& x_unit,
                              const Embedding& y_unit, double x_norm, Embedding& out) {
  const double a = w / x_norm;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] += a * (y_unit[k] - cosv * x_unit[k]);
  }
}

// Softmax weights over max-shifted scores; returns logsumexp of the scores.
inline double softmax_inplace(std::vector<double>& z) {
  const double lse = logsumexp(z);
  for (double& v : z) v = std::exp(v - lse);
  return lse;
}

}  // namespace detail

// Joint group centroid: (1/N^2) sum_i sum_j images[i] (.) texts[j].
// Algebraically equal to mean(images) (.) mean(texts); computed that way.
inline Embedding joint_group_centroid(const std::vector<Embedding>& images,
                                      const std::vector<Embedding>& texts) {
  require(!images.empty() && !texts.empty(), errc::empty_group, "joint_group_centroid of empty group");
  return elementwise_product(mean_of(images), mean_of(texts));
}

// Per-group means of the two modalities, not renormalized.
inline std::pair<Embedding, Embedding> modality_centroids(const Group& group) {
  require(!group.images.empty() && !group.texts.empty(), errc::empty_group,
          "modality_centroids of empty group");
  return {mean_of(group.images), mean_of(group.texts)};
}

// Outer pairwise loss: each image is pulled toward all texts of its group
// relative to every group's texts (and symmetrically for texts), averaged
// over the 2MN anchor terms.
inline LossOutput pairwise_outer_loss(const GroupBatch& batch, double tau) {
  require(tau > 0.0, errc::invalid_argument, "tau must be > 0");
  const BatchDims d = validate_batch(batch);
  const std::size_t M = d.m, N = d.n, L = d.l;
  const std::size_t P = M * N;

  std::vector<const Embedding*> imgs, txts;
  imgs.reserve(P);
  txts.reserve(P);
  for (const Group& g : batch.groups) {
    for (std::size_t i = 0; i < N; ++i) {
      imgs.push_back(&g.images[i]);
      txts.push_back(&g.texts[i]);
    }
  }
  const detail::NormCache ic = detail::norm_cache(imgs, "image embedding");
  const detail::NormCache tc = detail::norm_cache(txts, "text embedding");

  // cos[a][b] = cos(I_a, T_b) over flattened pair indices a,b.
  std::vector<std::vector<double>> cos(P, std::vector<double>(P));
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t b = 0; b < P; ++b) cos[a][b] = dot(ic.units[a], tc.units[b]);
  }

  // coef[a][b] collects d(sum of log terms)/d(cos[a][b]) * tau.
  std::vector<std::vector<double>> coef(P, std::vector<double>(P, 0.0));
  double total = 0.0;

  std::vector<double> z(P), zp(N);
  for (std::size_t g = 0; g < M; ++g) {
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t a = g * N + i;
      // Image anchor: positives are the texts of group g.
      for (std::size_t b = 0; b < P; ++b) z[b] = cos[a][b] / tau;
      for (std::size_t j = 0; j < N; ++j) zp[j] = z[g * N + j];
      const double lse_all = detail::softmax_inplace(z);
      const double lse_pos = detail::softmax_inplace(zp);
      total += lse_all - lse_pos;
      for (std::size_t b = 0; b < P; ++b) coef[a][b] += z[b];
      for (std::size_t j = 0; j < N; ++j) coef[a][g * N + j] -= zp[j];

      // Text anchor: positives are the images of group g.
      for (std::size_t b = 0; b < P; ++b) z[b] = cos[b][a] / tau;
      for (std::size_t j = 0; j < N; ++j) zp[j] = z[g * N + j];
      const double lse_all_t = detail::softmax_inplace(z);
      const double lse_pos_t = detail::softmax_inplace(zp);
      total += lse_all_t - lse_pos_t;
      for (std::size_t b = 0; b < P; ++b) coef[b][a] += z[b];
      for (std::size_t j = 0; j < N; ++j) coef[g * N + j][a] -= zp[j];
    }
  }

  LossOutput out;
  const double scale = 1.0 / (2.0 * static_cast<double>(M) * static_cast<double>(N));
  out.value = total * scale;
  out.grad_images = detail::zero_grads(M, N, L);
  out.grad_texts = detail::zero_grads(M, N, L);
  const double f = scale / tau;
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t b = 0; b < P; ++b) {
      const double w = coef[a][b] * f;
      if (w == 0.0) continue;
      detail::add_cosine_grad_x(w, cos[a][b], ic.units[a], tc.units[b], ic.norms[a],
                                out.grad_images[a / N][a % N]);
      detail::add_cosine_grad_x(w, cos[a][b], tc.units[b], ic.units[a], tc.norms[b],
                                out.grad_texts[b / N][b % N]);
    }
  }
  return out;
}

// Inner pairwise loss: every combined vector I_{g,i} (.) T_{g,j} is classified
// against the M joint centroids, averaged over the MN^2 combined vectors.
// Gradients flow through the combined vectors and (unless stopped) the centroids.
inline LossOutput pairwise_inner_loss(const GroupBatch& batch, double tau_inner,
                                      bool stop_gradient_centroids = false) {
  require(tau_inner > 0.0, errc::invalid_argument, "tau_inner must be > 0");
  const BatchDims d = validate_batch(batch);
  const std::size_t M = d.m, N = d.n, L = d.l;

  std::vector<Embedding> mean_img(M), mean_txt(M), cent(M);
  for (std::size_t g = 0; g < M; ++g) {
    mean_img[g] = mean_of(batch.groups[g].images);
    mean_txt[g] = mean_of(batch.groups[g].texts);
    cent[g] = elementwise_product(mean_img[g], mean_txt[g]);
  }
  std::vector<const Embedding*> cps(M);
  for (std::size_t g = 0; g < M; ++g) cps[g] = &cent[g];
  const detail::NormCache cc = detail::norm_cache(cps, "joint centroid");

  LossOutput out;
  out.grad_images = detail::zero_grads(M, N, L);
  out.grad_texts = detail::zero_grads(M, N, L);
  std::vector<Embedding> grad_cent(M, Embedding(L, 0.0));

  double total = 0.0;
  const double scale =
      1.0 / (static_cast<double>(M) * static_cast<double>(N) * static_cast<double>(N));
  const double f = scale / tau_inner;

  std::vector<double> z(M), cosv(M);
  Embedding comb(L), comb_unit(L), gcomb(L);
  for (std::size_t g = 0; g < M; ++g) {
    const Group& grp = batch.groups[g];
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        for (std::size_t k = 0; k < L; ++k) comb[k] = grp.images[i][k] * grp.texts[j][k];
        const double cn = norm(comb);
        require(cn >= kZeroNormEps, errc::zero_norm_vector,
                "degenerate combined vector (norm below 1e-12)");
        for (std::size_t k = 0; k < L; ++k) comb_unit[k] = comb[k] / cn;

        for (std::size_t h = 0; h < M; ++h) {
          cosv[h] = dot(comb_unit, cc.units[h]);
          z[h] = cosv[h] / tau_inner;
        }
        const double zg = z[g];
        const double lse = detail::softmax_inplace(z);
        total += lse - zg;

        std::fill(gcomb.begin(), gcomb.end(), 0.0);
        for (std::size_t h = 0; h < M; ++h) {
          const double w = (z[h] - (h == g ? 1.0 : 0.0)) * f;
          if (w == 0.0) continue;
          detail::add_cosine_grad_x(w, cosv[h], comb_unit, cc.units[h], cn, gcomb);
          if (!stop_gradient_centroids) {
            detail::add_cosine_grad_x(w, cosv[h], cc.units[h], comb_unit, cc.norms[h],
                                      grad_cent[h]);
          }
        }
        for (std::size_t k = 0; k < L; ++k) {
          out.grad_images[g][i][k] += gcomb[k] * grp.texts[j][k];
          out.grad_texts[g][j][k] += gcomb[k] * grp.images[i][k];
        }
      }
    }
  }

  if (!stop_gradient_centroids) {
    // cent[g] = mean(I_g) (.) mean(T_g): distribute through both means.
    const double invN = 1.0 / static_cast<double>(N);
    for (std::size_t g = 0; g < M; ++g) {
      for (std::size_t a = 0; a < N; ++a) {
        for (std::size_t k = 0; k < L; ++k) {
          out.grad_images[g][a][k] += grad_cent[g][k] * mean_txt[g][k] * invN;
          out.grad_texts[g][a][k] += grad_cent[g][k] * mean_img[g][k] * invN;
        }
      }
    }
  }

  out.value = total * scale;
  return out;
}

namespace detail {

inline LossOutput combine_losses(const LossOutput& inner, const LossOutput& outer, double alpha) {
  LossOutput out;
  out.value = alpha * inner.value + (1.0 - alpha) * outer.value;
  out.grad_images = inner.grad_images;
  out.grad_texts = inner.grad_texts;
  for (std::size_t g = 0; g < out.grad_images.size(); ++g) {
    for (std::size_t i = 0; i < out.grad_images[g].size(); ++i) {
      for (std::size_t k = 0; k < out.grad_images[g][i].size(); ++k) {
        out.grad_images[g][i][k] =
            alpha * out.grad_images[g][i][k] + (1.0 - alpha) * outer.grad_images[g][i][k];
        out.grad_texts[g][i][k] =
            alpha * out.grad_texts[g][i][k] + (1.0 - alpha) * outer.grad_texts[g][i][k];
      }
    }
  }
  return out;
}

}  // namespace detail

inline LossOutput pairwise_loss(const GroupBatch& batch, const LossConfig& cfg) {
  validate_config(cfg);
  const LossOutput inner =
      pairwise_inner_loss(batch, cfg.tau_inner, cfg.stop_gradient_centroids);
  const LossOutput outer = pairwise_outer_loss(batch, cfg.tau);
  return detail::combine_losses(inner, outer, cfg.alpha);
}

// Outer centroid loss: symmetric cross-entropy over the M (mu_I, mu_T)
// centroid pairs, averaged with factor 1/2M.
inline LossOutput centroid_outer_loss(const GroupBatch& batch, double tau) {
  require(tau > 0.0, errc::invalid_argument, "tau must be > 0");
  const BatchDims d = validate_batch(batch);
  const std::size_t M = d.m, N = d.n, L = d.l;

  std::vector<Embedding> mu_img(M), mu_txt(M);
  for (std::size_t g = 0; g < M; ++g) {
    auto [mi, mt] = modality_centroids(batch.groups[g]);
    mu_img[g] = std::move(mi);
    mu_txt[g] = std::move(mt);
  }
  std::vector<const Embedding*> ip(M), tp(M);
  for (std::size_t g = 0; g < M; ++g) {
    ip[g] = &mu_img[g];
    tp[g] = &mu_txt[g];
  }
  const detail::NormCache ic = detail::norm_cache(ip, "image centroid");
  const detail::NormCache tc = detail::norm_cache(tp, "text centroid");

  std::vector<std::vector<double>> cos(M, std::vector<double>(M));
  for (std::size_t g = 0; g < M; ++g) {
    for (std::size_t h = 0; h < M; ++h) cos[g][h] = dot(ic.units[g], tc.units[h]);
  }

  std::vector<std::vector<double>> coef(M, std::vector<double>(M, 0.0));
  double total = 0.0;
  std::vector<double> z(M);
  for (std::size_t g = 0; g < M; ++g) {
    for (std::size_t h = 0; h < M; ++h) z[h] = cos[g][h] / tau;
    double zg = z[g];
    total += detail::softmax_inplace(z) - zg;
    for (std::size_t h = 0; h < M; ++h) coef[g][h] += z[h] - (h == g ? 1.0 : 0.0);

    for (std::size_t h = 0; h < M; ++h) z[h] = cos[h][g] / tau;
    zg = z[g];
    total += detail::softmax_inplace(z) - zg;
    for (std::size_t h = 0; h < M; ++h) coef[h][g] += z[h] - (h == g ? 1.0 : 0.0);
  }

  LossOutput out;
  const double scale = 1.0 / (2.0 * static_cast<double>(M));
  out.value = total * scale;
  out.grad_images = detail::zero_grads(M, N, L);
  out.grad_texts = detail::zero_grads(M, N, L);

  std::vector<Embedding> gmu_img(M, Embedding(L, 0.0)), gmu_txt(M, Embedding(L, 0.0));
  const double f = scale / tau;
  for (std::size_t g = 0; g < M; ++g) {
    for (std::size_t h = 0; h < M; ++h) {
      const double w = coef[g][h] * f;
      if (w == 0.0) continue;
      detail::add_cosine_grad_x(w, cos[g][h], ic.units[g], tc.units[h], ic.norms[g], gmu_img[g]);
      detail::add_cosine_grad_x(w, cos[g][h], tc.units[h], ic.units[g], tc.norms[h], gmu_txt[h]);
    }
  }
  const double invN = 1.0 / static_cast<double>(N);
  for (std::size_t g = 0; g < M; ++g) {
    for (std::size_t a = 0; a < N; ++a) {
      axpy(invN, gmu_img[g], out.grad_images[g][a]);
      axpy(invN, gmu_txt[g], out.grad_texts[g][a]);
    }
  }
  return out;
}

// Inner centroid loss: each image against the M image centroids, each text
// against the M text centroids, averaged with factor 1/2MN.
inline LossOutput centroid_inner_loss(const GroupBatch& batch, double tau_inner,
                                      bool stop_gradient_centroids = false) {
  require(tau_inner > 0.0, errc::invalid_argument, "tau_inner must be > 0");
  const BatchDims d = validate_batch(batch);
  const std::size_t M = d.m, N = d.n, L = d.l;

  std::vector<Embedding> mu_img(M), mu_txt(M);
  for (std::size_t g = 0; g < M; ++g) {
    auto [mi, mt] = modality_centroids(batch.groups[g]);
    mu_img[g] = std::move(mi);
    mu_txt[g] = std::move(mt);
  }
  std::vector<const Embedding*> ip(M), tp(M);
  for (std::size_t g = 0; g < M; ++g) {
    ip[g] = &mu_img[g];
    tp[g] = &mu_txt[g];
  }
  const detail::NormCache mic = detail::norm_cache(ip, "image centroid");
  const detail::NormCache mtc = detail::norm_cache(tp, "text centroid");

  std::vector<const Embedding*> imgs, txts;
  imgs.reserve(M * N);
  txts.reserve(M * N);
  for (const Group& g : batch.groups) {
    for (std::size_t i = 0; i < N; ++i) {
      imgs.push_back(&g.images[i]);
      txts.push_back(&g.texts[i]);
    }
  }
  const detail::NormCache ic = detail::norm_cache(imgs, "image embedding");
  const detail::NormCache tc = detail::norm_cache(txts, "text embedding");

  LossOutput out;
  out.grad_images = detail::zero_grads(M, N, L);
  out.grad_texts = detail::zero_grads(M, N, L);
  std::vector<Embedding> gmu_img(M, Embedding(L, 0.0)), gmu_txt(M, Embedding(L, 0.0));

  double total = 0.0;
  const double scale = 1.0 / (2.0 * static_cast<double>(M) * static_cast<double>(N));
  const double f = scale / tau_inner;

  std::vector<double> z(M), cosv(M);
  for (std::size_t g = 0; g < M; ++g) {
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t a = g * N + i;
      // Image side.
      for (std::size_t h = 0; h < M; ++h) {
        cosv[h] = dot(ic.units[a], mic.units[h]);
        z[h] = cosv[h] / tau_inner;
      }
      double zg = z[g];
      total += detail::softmax_inplace(z) - zg;
      for (std::size_t h = 0; h < M; ++h) {
        const double w = (z[h] - (h == g ? 1.0 : 0.0)) * f;
        if (w == 0.0) continue;
        detail::add_cosine_grad_x(w, cosv[h], ic.units[a], mic.units[h], ic.norms[a],
                                  out.grad_images[g][i]);
        if (!stop_gradient_centroids) {
          detail::add_cosine_grad_x(w, cosv[h], mic.units[h], ic.units[a], mic.norms[h],
                                    gmu_img[h]);
        }
      }
      // Text side.
      for (std::size_t h = 0; h < M; ++h) {
        cosv[h] = dot(tc.units[a], mtc.units[h]);
        z[h] = cosv[h] / tau_inner;
      }
      zg = z[g];
      total += detail::softmax_inplace(z) - zg;
      for (std::size_t h = 0; h < M; ++h) {
        const double w = (z[h] - (h == g ? 1.0 : 0.0)) * f;
        if (w == 0.0) continue;
        detail::add_cosine_grad_x(w, cosv[h], tc.units[a], mtc.units[h], tc.norms[a],
                                  out.grad_texts[g][i]);
        if (!stop_gradient_centroids) {
          detail::add_cosine_grad_x(w, cosv[h], mtc.units[h], tc.units[a], mtc.norms[h],
                                    gmu_txt[h]);
        }
      }
    }
  }

  if (!stop_gradient_centroids) {
    const double invN = 1.0 / static_cast<double>(N);
    for (std::size_t g = 0; g < M; ++g) {
      for (std::size_t a = 0; a < N; ++a) {
        axpy(invN, gmu_img[g], out.grad_images[g][a]);
        axpy(invN, gmu_txt[g], out.grad_texts[g][a]);
      }
    }
  }

  out.value = total * scale;
  return out;
}

inline LossOutput centroid_loss(const GroupBatch& batch, const LossConfig& cfg) {
  validate_config(cfg);
  const LossOutput inner =
      centroid_inner_loss(batch, cfg.tau_inner, cfg.stop_gradient_centroids);
  const LossOutput outer = centroid_outer_loss(batch, cfg.tau);
  return detail::combine_losses(inner, outer, cfg.alpha);
}

// Instance-level symmetric InfoNCE over K individual pairs (ablation baseline).
// Gradients come back as a single group of K: grad_images[0][k] <-> images[k].
inline LossOutput infonce_loss(const std::vector<Embedding>& images,
                               const std::vector<Embedding>& texts, double tau) {
  require(tau > 0.0, errc::invalid_argument, "tau must be > 0");
  require(!images.empty() && images.size() == texts.size(), errc::dim_mismatch,
          "infonce needs K >= 1 aligned pairs");
  const std::size_t K = images.size();
  const std::size_t L = images[0].size();

  std::vector<const Embedding*> ip(K), tp(K);
  for (std::size_t i = 0; i < K; ++i) {
    require(images[i].size() == L && texts[i].size() == L, errc::dim_mismatch,
            "mixed dims in infonce batch");
    ip[i] = &images[i];
    tp[i] = &texts[i];
  }
  const detail::NormCache ic = detail::norm_cache(ip, "image embedding");
  const detail::NormCache tc = detail::norm_cache(tp, "text embedding");

  std::vector<std::vector<double>> cos(K, std::vector<double>(K));
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) cos[a][b] = dot(ic.units[a], tc.units[b]);
  }

  std::vector<std::vector<double>> coef(K, std::vector<double>(K, 0.0));
  double total = 0.0;
  std::vector<double> z(K);
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) z[b] = cos[a][b] / tau;
    double za = z[a];
    total += detail::softmax_inplace(z) - za;
    for (std::size_t b = 0; b < K; ++b) coef[a][b] += z[b] - (b == a ? 1.0 : 0.0);

    for (std::size_t b = 0; b < K; ++b) z[b] = cos[b][a] / tau;
    za = z[a];
    total += detail::softmax_inplace(z) - za;
    for (std::size_t b = 0; b < K; ++b) coef[b][a] += z[b] - (b == a ? 1.0 : 0.0);
  }

  LossOutput out;
  const double scale = 1.0 / (2.0 * static_cast<double>(K));
  out.value = total * scale;
  out.grad_images = detail::zero_grads(1, K, L);
  out.grad_texts = detail::zero_grads(1, K, L);
  const double f = scale / tau;
  for (std::size_t a = 0; a < K; ++a) {
    for (std::size_t b = 0; b < K; ++b) {
      const double w = coef[a][b] * f;
      if (w == 0.0) continue;
      detail::add_cosine_grad_x(w, cos[a][b], ic.units[a], tc.units[b], ic.norms[a],
                                out.grad_images[0][a]);
      detail::add_cosine_grad_x(w, cos[a][b], tc.units[b], ic.units[a], tc.norms[b],
                                out.grad_texts[0][b]);
    }
  }
  return out;
}

enum class LossKind {
  pairwise_outer,
  pairwise_inner,
  pairwise,
  centroid_outer,
  centroid_inner,
  centroid,
  infonce,
};

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::pairwise_outer: return "pairwise_outer";
    case LossKind::pairwise_inner: return "pairwise_inner";
    case LossKind::pairwise: return "pairwise";
    case LossKind::centroid_outer: return "centroid_outer";
    case LossKind::centroid_inner: return "centroid_inner";
    case LossKind::centroid: return "centroid";
    case LossKind::infonce: return "infonce";
  }
  return "unknown";
}

inline LossKind loss_kind_from_name(const std::string& name) {
  for (LossKind k :
       {LossKind::pairwise_outer, LossKind::pairwise_inner, LossKind::pairwise,
        LossKind::centroid_outer, LossKind::centroid_inner, LossKind::centroid,
        LossKind::infonce}) {
    if (name == loss_kind_name(k)) return k;
  }
  raise(errc::invalid_argument, "unknown loss kind '" + name + "'");
}

namespace detail {

inline void flatten_batch(const GroupBatch& batch, std::vector<Embedding>& images,
                          std::vector<Embedding>& texts) {
  for (const Group& g : batch.groups) {
    images.insert(images.end(), g.images.begin(), g.images.end());
    texts.insert(texts.end(), g.texts.begin(), g.texts.end());
  }
}

}  // namespace detail

// Evaluate any loss on a group batch. infonce flattens the batch into
// M*N individual pairs; its grads are reshaped back to the batch shape.
inline LossOutput loss_eval(LossKind kind, const GroupBatch& batch, const LossConfig& cfg) {
  validate_config(cfg);
  switch (kind) {
    case LossKind::pairwise_outer: return pairwise_outer_loss(batch, cfg.tau);
    case LossKind::pairwise_inner:
      return pairwise_inner_loss(batch, cfg.tau_inner, cfg.stop_gradient_centroids);
    case LossKind::pairwise: return pairwise_loss(batch, cfg);
    case LossKind::centroid_outer: return centroid_outer_loss(batch, cfg.tau);
    case LossKind::centroid_inner:
      return centroid_inner_loss(batch, cfg.tau_inner, cfg.stop_gradient_centroids);
    case LossKind::centroid: return centroid_loss(batch, cfg);
    case LossKind::infonce: {
      const BatchDims d = validate_batch(batch);
      std::vector<Embedding> images, texts;
      detail::flatten_batch(batch, images, texts);
      LossOutput flat = infonce_loss(images, texts, cfg.tau);
      LossOutput out;
      out.value = flat.value;
      out.grad_images = detail::zero_grads(d.m, d.n, d.l);
      out.grad_texts = detail::zero_grads(d.m, d.n, d.l);
      for (std::size_t g = 0; g < d.m; ++g) {
        for (std::size_t i = 0; i < d.n; ++i) {
          out.grad_images[g][i] = flat.grad_images[0][g * d.n + i];
          out.grad_texts[g][i] = flat.grad_texts[0][g * d.n + i];
        }
      }
      return out;
    }
  }
  raise(errc::invalid_argument, "unhandled loss kind");
}

inline double loss_value(LossKind kind, const GroupBatch& batch, const LossConfig& cfg) {
  return loss_eval(kind, batch, cfg).value;
}

struct FiniteDiffGrads {
  std::vector<std::vector<Embedding>> images;
  std::vector<std::vector<Embedding>> texts;
};

// Central differences (f(x+h) - f(x-h)) / 2h for every coordinate of every
// image and text embedding. Verification oracle for the analytic gradients.
inline FiniteDiffGrads finite_difference_grad(
    const std::function<double(const GroupBatch&)>& value_fn, GroupBatch batch, double h) {
  require(h >= 1e-7 && h <= 1e-3, errc::invalid_argument, "h must be in [1e-7, 1e-3]");
  const BatchDims d = validate_batch(batch);
  FiniteDiffGrads out;
  out.images = detail::zero_grads(d.m, d.n, d.l);
  out.texts = detail::zero_grads(d.m, d.n, d.l);
  auto probe = [&](Embedding& slot, Embedding& dst) {
    for (std::size_t k = 0; k < d.l; ++k) {
      const double saved = slot[k];
      slot[k] = saved + h;
      const double up = value_fn(batch);
      slot[k] = saved - h;
      const double down = value_fn(batch);
      slot[k] = saved;
      dst[k] = (up - down) / (2.0 * h);
    }
  };
  for (std::size_t g = 0; g < d.m; ++g) {
    for (std::size_t i = 0; i < d.n; ++i) {
      probe(batch.groups[g].images[i], out.images[g][i]);
      probe(batch.groups[g].texts[i], out.texts[g][i]);
    }
  }
  return out;
}

inline FiniteDiffGrads finite_difference_grad(LossKind kind, const GroupBatch& batch,
                                              const LossConfig& cfg, double h) {
  return finite_difference_grad(
      [&](const GroupBatch& b) { return loss_value(kind, b, cfg); }, batch, h);
}

// Max relative error between analytic and numeric gradients, relative to
// max(|analytic|, |numeric|, floor).
inline double max_grad_rel_error(const LossOutput& analytic, const FiniteDiffGrads& numeric,
                                 double floor = 1e-8) {
  double worst = 0.0;
  auto scan = [&](const std::vector<std::vector<Embedding>>& a,
                  const std::vector<std::vector<Embedding>>& b) {
    for (std::size_t g = 0; g < a.size(); ++g) {
      for (std::size_t i = 0; i < a[g].size(); ++i) {
        for (std::size_t k = 0; k < a[g][i].size(); ++k) {
          const double x = a[g][i][k];
          const double y = b[g][i][k];
          const double denom = std::max({std::fabs(x), std::fabs(y), floor});
          worst = std::max(worst, std::fabs(x - y) / denom);
        }
      }
    }
  };
  scan(analytic.grad_images, numeric.images);
  scan(analytic.grad_texts, numeric.texts);
  return worst;
}

}  // namespace glass
