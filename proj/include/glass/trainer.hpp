#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "glass/encoders.hpp"
#include "glass/error.hpp"
#include "glass/forge.hpp"
#include "glass/loss.hpp"
#include "glass/version.hpp"

namespace glass {

enum class TrainLossKind { pairwise, centroid, infonce, text_text };

inline const char* train_loss_name(TrainLossKind k) {
  switch (k) {
    case TrainLossKind::pairwise: return "pairwise";
    case TrainLossKind::centroid: return "centroid";
    case TrainLossKind::infonce: return "infonce";
    case TrainLossKind::text_text: return "text_text";
  }
  return "unknown";
}

inline TrainLossKind train_loss_from_name(const std::string& name) {
  for (TrainLossKind k : {TrainLossKind::pairwise, TrainLossKind::centroid,
                          TrainLossKind::infonce, TrainLossKind::text_text}) {
    if (name == train_loss_name(k)) return k;
  }
  raise(errc::invalid_argument, "unknown training loss '" + name + "'");
}

struct TrainConfig {
  TrainLossKind loss_kind = TrainLossKind::pairwise;
  bool text_text_uses_centroid = false;  // grouped family for text_text mode
  int groups_per_batch = 4;
  int pairs_per_group = 5;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  double tau = 0.1;
  double tau_inner = 0.1;
  double alpha = 0.7;
  int epochs = 200;
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  bool stop_gradient_centroids = false;
  EncoderDims dims{.text_buckets = 512, .image_dim = 32, .embed_dim = 32, .hidden = 0};
};

// Desk-scale defaults.
inline TrainConfig toy_preset() { return TrainConfig{}; }

// The reported fine-tuning hyperparameters, shipped verbatim as a named
// preset: groups 2, pairs 10, lr 1e-8, tau 0.1, alpha 0.7, five epochs.
// The learning rate targets a large pretrained model and will barely move
// the toy towers; prefer `toy` for experiments at this scale.
inline TrainConfig paper_table2_preset() {
  TrainConfig cfg;
  cfg.groups_per_batch = 2;
  cfg.pairs_per_group = 10;
  cfg.learning_rate = 1e-8;
  cfg.tau = 0.1;
  cfg.tau_inner = 0.1;
  cfg.alpha = 0.7;
  cfg.epochs = 5;
  return cfg;
}

inline void validate_train_config(const TrainConfig& cfg) {
  const int min_groups = cfg.loss_kind == TrainLossKind::infonce ? 1 : 2;
  require(cfg.groups_per_batch >= min_groups, errc::invalid_argument,
          "groups_per_batch must be >= " + std::to_string(min_groups) + " for " +
              train_loss_name(cfg.loss_kind));
  require(cfg.pairs_per_group >= 1, errc::invalid_argument, "pairs_per_group must be >= 1");
  require(std::isfinite(cfg.learning_rate) && cfg.learning_rate >= 0.0, errc::invalid_argument,
          "learning_rate must be finite and >= 0");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, errc::invalid_argument,
          "momentum must be in [0,1)");
  require(cfg.tau > 0.0 && cfg.tau_inner > 0.0, errc::invalid_argument,
          "temperatures must be > 0");
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, errc::invalid_argument, "alpha must be in [0,1]");
  require(cfg.epochs >= 0, errc::invalid_argument, "epochs must be >= 0");
  require(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0, errc::invalid_argument,
          "split_fraction must be in (0,1)");
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"loss_kind", train_loss_name(cfg.loss_kind)},
                        {"text_text_uses_centroid", cfg.text_text_uses_centroid},
                        {"groups_per_batch", cfg.groups_per_batch},
                        {"pairs_per_group", cfg.pairs_per_group},
                        {"learning_rate", cfg.learning_rate},
                        {"momentum", cfg.momentum},
                        {"tau", cfg.tau},
                        {"tau_inner", cfg.tau_inner},
                        {"alpha", cfg.alpha},
                        {"epochs", cfg.epochs},
                        {"seed", cfg.seed},
                        {"split_fraction", cfg.split_fraction},
                        {"stop_gradient_centroids", cfg.stop_gradient_centroids},
                        {"dims",
                         {{"text_buckets", cfg.dims.text_buckets},
                          {"image_dim", cfg.dims.image_dim},
                          {"embed_dim", cfg.dims.embed_dim},
                          {"hidden", cfg.dims.hidden}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.loss_kind = train_loss_from_name(j.value("loss_kind", "pairwise"));
  cfg.text_text_uses_centroid = j.value("text_text_uses_centroid", false);
  cfg.groups_per_batch = j.value("groups_per_batch", cfg.groups_per_batch);
  cfg.pairs_per_group = j.value("pairs_per_group", cfg.pairs_per_group);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.momentum = j.value("momentum", cfg.momentum);
  cfg.tau = j.value("tau", cfg.tau);
  cfg.tau_inner = j.value("tau_inner", cfg.tau_inner);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
  cfg.stop_gradient_centroids = j.value("stop_gradient_centroids", cfg.stop_gradient_centroids);
  if (j.contains("dims")) {
    const auto& d = j["dims"];
    cfg.dims.text_buckets = d.value("text_buckets", cfg.dims.text_buckets);
    cfg.dims.image_dim = d.value("image_dim", cfg.dims.image_dim);
    cfg.dims.embed_dim = d.value("embed_dim", cfg.dims.embed_dim);
    cfg.dims.hidden = d.value("hidden", cfg.dims.hidden);
  }
  return cfg;
}

inline std::string train_config_hash(const TrainConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(train_config_to_json(cfg).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset split.

struct DatasetSplit {
  std::vector<int> train_leaves;
  std::vector<int> test_leaves;
  std::map<std::string, std::vector<int>> train_by_group;
  std::map<std::string, std::vector<int>> test_by_group;
};

// Per-group stratified split: every group lands in both partitions;
// |train|/n stays within 1/n of the fraction.
inline DatasetSplit split_dataset(const ConceptDag& dag, double fraction, Rng& rng) {
  require(fraction > 0.0 && fraction < 1.0, errc::invalid_argument,
          "split fraction must be in (0,1)");
  DatasetSplit split;
  for (const std::string& id : dag.group_ids()) {
    const ConceptNode& node = dag.nodes.at(id);
    require(node.leaf_count() >= 2, errc::group_too_small,
            "group " + id + " has " + std::to_string(node.leaf_count()) +
                " leaves; need >= 2 to appear in both partitions");
    std::vector<int> leaves = node.leaf_ids;
    rng.shuffle(leaves);
    const int n = static_cast<int>(leaves.size());
    int n_train = static_cast<int>(std::lround(fraction * n));
    n_train = std::max(1, std::min(n - 1, n_train));
    for (int i = 0; i < n; ++i) {
      if (i < n_train) {
        split.train_leaves.push_back(leaves[static_cast<std::size_t>(i)]);
        split.train_by_group[id].push_back(leaves[static_cast<std::size_t>(i)]);
      } else {
        split.test_leaves.push_back(leaves[static_cast<std::size_t>(i)]);
        split.test_by_group[id].push_back(leaves[static_cast<std::size_t>(i)]);
      }
    }
  }
  std::sort(split.train_leaves.begin(), split.train_leaves.end());
  std::sort(split.test_leaves.begin(), split.test_leaves.end());
  for (auto& [id, xs] : split.train_by_group) std::sort(xs.begin(), xs.end());
  for (auto& [id, xs] : split.test_by_group) std::sort(xs.begin(), xs.end());
  return split;
}

// ---------------------------------------------------------------------------
// Batch sampling: a target group plus companions drawn from its hard
// negatives, uniform fallback when those run out.

struct BatchPlan {
  std::vector<std::string> group_ids;
  std::vector<std::vector<int>> leaf_ids;  // per group, pairs_per_group entries
  bool hard_negative_fallback = false;
  bool sampled_with_replacement = false;
};

inline BatchPlan plan_batch(const ConceptDag& dag, const DatasetSplit& split,
                            const TrainConfig& cfg, Rng& rng) {
  std::vector<std::string> all_groups;
  for (const auto& [id, leaves] : split.train_by_group) {
    if (!leaves.empty()) all_groups.push_back(id);
  }
  require(!all_groups.empty(), errc::no_groups, "no groups with training leaves");

  BatchPlan plan;
  const std::string target = all_groups[rng.next_below(all_groups.size())];
  plan.group_ids.push_back(target);

  const int companions = cfg.groups_per_batch - 1;
  if (companions > 0) {
    std::vector<std::string> negs;
    for (const std::string& id : dag.nodes.at(target).hard_negatives) {
      if (split.train_by_group.count(id)) negs.push_back(id);
    }
    rng.shuffle(negs);
    for (const std::string& id : negs) {
      if (static_cast<int>(plan.group_ids.size()) >= cfg.groups_per_batch) break;
      plan.group_ids.push_back(id);
    }
    if (static_cast<int>(plan.group_ids.size()) < cfg.groups_per_batch) {
      plan.hard_negative_fallback = true;
      std::vector<std::string> rest;
      for (const std::string& id : all_groups) {
        if (std::find(plan.group_ids.begin(), plan.group_ids.end(), id) == plan.group_ids.end()) {
          rest.push_back(id);
        }
      }
      rng.shuffle(rest);
      for (const std::string& id : rest) {
        if (static_cast<int>(plan.group_ids.size()) >= cfg.groups_per_batch) break;
        plan.group_ids.push_back(id);
      }
    }
  }
  require(static_cast<int>(plan.group_ids.size()) == cfg.groups_per_batch, errc::no_groups,
          "not enough groups to fill a batch of " + std::to_string(cfg.groups_per_batch));

  for (const std::string& id : plan.group_ids) {
    const std::vector<int>& pool = split.train_by_group.at(id);
    std::vector<int> chosen;
    if (static_cast<int>(pool.size()) >= cfg.pairs_per_group) {
      std::vector<int> shuffled = pool;
      rng.shuffle(shuffled);
      chosen.assign(shuffled.begin(), shuffled.begin() + cfg.pairs_per_group);
    } else {
      plan.sampled_with_replacement = true;
      for (int i = 0; i < cfg.pairs_per_group; ++i) {
        chosen.push_back(pool[rng.next_below(pool.size())]);
      }
    }
    plan.leaf_ids.push_back(std::move(chosen));
  }
  return plan;
}

namespace detail {

struct EncodedBatch {
  GroupBatch batch;
  // Caches aligned with batch slots; image-slot caches may be text-tower
  // caches in text_text mode.
  std::vector<std::vector<TowerCache>> image_caches, text_caches;
  bool image_slot_is_text = false;
};

inline EncodedBatch encode_plan(const BatchPlan& plan, const ConceptDag& dag,
                                const Corpus& corpus, const EncoderParams& params,
                                bool text_text_mode, bool want_caches) {
  EncodedBatch out;
  out.image_slot_is_text = text_text_mode;
  out.batch.groups.resize(plan.group_ids.size());
  if (want_caches) {
    out.image_caches.resize(plan.group_ids.size());
    out.text_caches.resize(plan.group_ids.size());
  }
  for (std::size_t g = 0; g < plan.group_ids.size(); ++g) {
    Group& grp = out.batch.groups[g];
    grp.group_id = plan.group_ids[g];
    for (int leaf : plan.leaf_ids[g]) {
      const LeafRecord& rec = corpus.by_id(leaf);
      TowerCache tc, icache;
      grp.texts.push_back(encode_text(featurize_text(rec.caption, params.dims.text_buckets),
                                      params, want_caches ? &tc : nullptr));
      if (text_text_mode) {
        const std::string& concept_text = dag.nodes.at(plan.group_ids[g]).concept_text;
        grp.images.push_back(encode_text(
            featurize_text(concept_text, params.dims.text_buckets), params,
            want_caches ? &icache : nullptr));
      } else {
        grp.images.push_back(
            encode_image(rec.image_features, params, want_caches ? &icache : nullptr));
      }
      if (want_caches) {
        out.text_caches[g].push_back(std::move(tc));
        out.image_caches[g].push_back(std::move(icache));
      }
    }
  }
  return out;
}

}  // namespace detail

// Spec surface: one sampled, encoded batch.
inline GroupBatch sample_batch(const ConceptDag& dag, const Corpus& corpus,
                               const EncoderParams& params, const DatasetSplit& split,
                               const TrainConfig& cfg, Rng& rng) {
  const BatchPlan plan = plan_batch(dag, split, cfg, rng);
  return detail::encode_plan(plan, dag, corpus, params,
                             cfg.loss_kind == TrainLossKind::text_text, false)
      .batch;
}

// ---------------------------------------------------------------------------
// Training.

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;  // informational; excluded from determinism contracts
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  // Sampler events worth surfacing: batches whose companions fell back to
  // uniform groups, and batches that drew pairs with replacement.
  int hard_negative_fallbacks = 0;
  int replacement_samples = 0;
};

inline void save_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), errc::io_failure, "cannot write " + path);
  out << "step,epoch,loss,grad_norm,wall_ms\n";
  out.precision(17);
  for (const StepRecord& s : history.steps) {
    out << s.step << "," << s.epoch << "," << s.loss << "," << s.grad_norm << "," << s.wall_ms
        << "\n";
  }
}

struct TrainerState {
  int next_step = 0;
  std::uint64_t sample_counter = 0;  // position in the sampling stream
};

// Exact resume-equality holds for plain descent: the checkpoint restores the
// parameters and the sampling-stream position, but not the optional momentum
// velocity buffer.
struct Checkpoint {
  EncoderParams params;
  std::string training_config_hash;
  std::optional<TrainerState> trainer_state;
  std::optional<TrainConfig> train_config;  // lets eval rebuild the exact split
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json j{{"format_version", kCheckpointFormatVersion},
                   {"kind", "glass.checkpoint"},
                   {"B", ckpt.params.dims.text_buckets},
                   {"D", ckpt.params.dims.image_dim},
                   {"L", ckpt.params.dims.embed_dim},
                   {"hidden", ckpt.params.dims.hidden},
                   {"text_projection", ckpt.params.text_w1},
                   {"text_bias", ckpt.params.text_b1},
                   {"text_w2", ckpt.params.text_w2},
                   {"text_b2", ckpt.params.text_b2},
                   {"image_projection", ckpt.params.image_w1},
                   {"image_bias", ckpt.params.image_b1},
                   {"image_w2", ckpt.params.image_w2},
                   {"image_b2", ckpt.params.image_b2},
                   {"training_config_hash", ckpt.training_config_hash}};
  if (ckpt.trainer_state) {
    j["trainer_state"] = {{"next_step", ckpt.trainer_state->next_step},
                          {"sample_counter", ckpt.trainer_state->sample_counter}};
  }
  if (ckpt.train_config) j["train_config"] = train_config_to_json(*ckpt.train_config);
  std::ofstream out(path);
  require(static_cast<bool>(out), errc::io_failure, "cannot write " + path);
  out << j.dump(2) << "\n";
  require(static_cast<bool>(out), errc::io_failure, "write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io_failure, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    raise(errc::schema_version_mismatch, path + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    require(j.at("format_version").get<int>() == kCheckpointFormatVersion,
            errc::schema_version_mismatch,
            "unsupported checkpoint format_version " + j.at("format_version").dump());
    ckpt.params.dims.text_buckets = j.at("B").get<int>();
    ckpt.params.dims.image_dim = j.at("D").get<int>();
    ckpt.params.dims.embed_dim = j.at("L").get<int>();
    ckpt.params.dims.hidden = j.value("hidden", 0);
    ckpt.params.text_w1 = j.at("text_projection").get<std::vector<double>>();
    ckpt.params.text_b1 = j.at("text_bias").get<std::vector<double>>();
    ckpt.params.text_w2 = j.value("text_w2", std::vector<double>{});
    ckpt.params.text_b2 = j.value("text_b2", std::vector<double>{});
    ckpt.params.image_w1 = j.at("image_projection").get<std::vector<double>>();
    ckpt.params.image_b1 = j.at("image_bias").get<std::vector<double>>();
    ckpt.params.image_w2 = j.value("image_w2", std::vector<double>{});
    ckpt.params.image_b2 = j.value("image_b2", std::vector<double>{});
    ckpt.training_config_hash = j.value("training_config_hash", "");
    if (j.contains("trainer_state")) {
      TrainerState st;
      st.next_step = j["trainer_state"].at("next_step").get<int>();
      st.sample_counter = j["trainer_state"].at("sample_counter").get<std::uint64_t>();
      ckpt.trainer_state = st;
    }
    if (j.contains("train_config")) {
      ckpt.train_config = train_config_from_json(j["train_config"]);
    }
  } catch (const error&) {
    throw;
  } catch (const std::exception& e) {
    raise(errc::schema_version_mismatch, std::string("malformed checkpoint: ") + e.what());
  }
  return ckpt;
}

struct TrainResult {
  EncoderParams params;
  TrainHistory history;
  DatasetSplit split;
  TrainerState state;
};

inline int steps_per_epoch(std::size_t train_leaf_count, const TrainConfig& cfg) {
  const std::size_t per_batch =
      static_cast<std::size_t>(cfg.groups_per_batch) * static_cast<std::size_t>(cfg.pairs_per_group);
  return static_cast<int>((train_leaf_count + per_batch - 1) / per_batch);
}

// Plain gradient descent over the encoder parameters (optional momentum).
// Sampling, initialization, and the split each draw from labeled sub-streams
// of cfg.seed, so identical (config, seed) runs are bitwise identical and a
// checkpoint resume continues the exact sampling stream.
inline TrainResult train(const ConceptDag& dag, const Corpus& corpus, const TrainConfig& cfg,
                         const std::optional<EncoderParams>& initial_params = std::nullopt,
                         const std::optional<TrainerState>& resume = std::nullopt) {
  validate_train_config(cfg);
  if (cfg.loss_kind == TrainLossKind::text_text) {
    for (const std::string& id : dag.group_ids()) {
      require(dag.nodes.at(id).generalized_caption.has_value(), errc::invalid_argument,
              "text_text training needs a forged dag with generalized captions");
    }
  }

  Rng master(cfg.seed);
  Rng init_rng = master.derive("init");
  Rng split_rng = master.derive("split");
  Rng sample_rng = master.derive("sample");

  TrainResult result;
  result.params = initial_params ? *initial_params : init_params(cfg.dims, init_rng);
  require(result.params.dims == cfg.dims, errc::dim_mismatch,
          "initial params do not match configured encoder dims");
  result.split = split_dataset(dag, cfg.split_fraction, split_rng);

  const int spe = steps_per_epoch(result.split.train_leaves.size(), cfg);
  const int total_steps = cfg.epochs * spe;
  int start_step = 0;
  if (resume) {
    start_step = resume->next_step;
    sample_rng.set_counter(resume->sample_counter);
  }

  LossConfig loss_cfg;
  loss_cfg.tau = cfg.tau;
  loss_cfg.tau_inner = cfg.tau_inner;
  loss_cfg.alpha = cfg.alpha;
  loss_cfg.stop_gradient_centroids = cfg.stop_gradient_centroids;
  LossKind kind = LossKind::pairwise;
  switch (cfg.loss_kind) {
    case TrainLossKind::pairwise: kind = LossKind::pairwise; break;
    case TrainLossKind::centroid: kind = LossKind::centroid; break;
    case TrainLossKind::infonce: kind = LossKind::infonce; break;
    case TrainLossKind::text_text:
      kind = cfg.text_text_uses_centroid ? LossKind::centroid : LossKind::pairwise;
      break;
  }
  const bool text_text = cfg.loss_kind == TrainLossKind::text_text;

  std::optional<ParamGrads> velocity;
  for (int step = start_step; step < total_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const BatchPlan plan = plan_batch(dag, result.split, cfg, sample_rng);
    if (plan.hard_negative_fallback) ++result.history.hard_negative_fallbacks;
    if (plan.sampled_with_replacement) ++result.history.replacement_samples;
    detail::EncodedBatch enc =
        detail::encode_plan(plan, dag, corpus, result.params, text_text, true);
    const LossOutput out = loss_eval(kind, enc.batch, loss_cfg);
    if (!std::isfinite(out.value)) {
      raise(errc::non_finite_loss, "loss became non-finite at step " + std::to_string(step) +
                                       " (epoch " + std::to_string(step / spe) + ")");
    }

    ParamGrads grads(result.params);
    for (std::size_t g = 0; g < enc.batch.groups.size(); ++g) {
      for (std::size_t i = 0; i < enc.batch.groups[g].images.size(); ++i) {
        backprop_text(enc.text_caches[g][i], out.grad_texts[g][i], result.params, grads);
        if (enc.image_slot_is_text) {
          backprop_text(enc.image_caches[g][i], out.grad_images[g][i], result.params, grads);
        } else {
          backprop_image(enc.image_caches[g][i], out.grad_images[g][i], result.params, grads);
        }
      }
    }

    if (cfg.momentum > 0.0) {
      if (!velocity) velocity.emplace(result.params);
      auto blend = [&](std::vector<double>& v, const std::vector<double>& g) {
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = cfg.momentum * v[k] + g[k];
      };
      blend(velocity->text_w1, grads.text_w1);
      blend(velocity->text_b1, grads.text_b1);
      blend(velocity->text_w2, grads.text_w2);
      blend(velocity->text_b2, grads.text_b2);
      blend(velocity->image_w1, grads.image_w1);
      blend(velocity->image_b1, grads.image_b1);
      blend(velocity->image_w2, grads.image_w2);
      blend(velocity->image_b2, grads.image_b2);
      apply_gradient_step(result.params, *velocity, cfg.learning_rate);
    } else {
      apply_gradient_step(result.params, grads, cfg.learning_rate);
    }

    StepRecord rec;
    rec.step = step;
    rec.epoch = spe > 0 ? step / spe : 0;
    rec.loss = out.value;
    rec.grad_norm = grads.l2_norm();
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.steps.push_back(rec);
  }

  result.state.next_step = total_steps;
  result.state.sample_counter = sample_rng.counter();
  return result;
}

// Text-alignment pretraining: the image slot carries the group's concept-text
// embedding, so only the text tower moves. Returns parameters to seed the
// main run (image tower still at its seed initialization).
inline TrainResult pretrain_text_alignment(const ConceptDag& dag, const Corpus& corpus,
                                           TrainConfig cfg,
                                           const std::optional<EncoderParams>& initial_params =
                                               std::nullopt) {
  cfg.loss_kind = TrainLossKind::text_text;
  return train(dag, corpus, cfg, initial_params);
}

// History comparison for the determinism contract: wall time is measurement,
// not state.
inline bool history_equal_modulo_walltime(const TrainHistory& a, const TrainHistory& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].step != b.steps[i].step || a.steps[i].epoch != b.steps[i].epoch ||
        a.steps[i].loss != b.steps[i].loss || a.steps[i].grad_norm != b.steps[i].grad_norm) {
      return false;
    }
  }
  return true;
}

}  // namespace glass
