#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "glass/encoders.hpp"
#include "glass/error.hpp"
#include "glass/forge.hpp"
#include "glass/trainer.hpp"
#include "glass/version.hpp"

namespace glass {

struct RecallResult {
  double r_at_1 = 0.0;
  int hits = 0;
  int n_queries = 0;
  int skipped = 0;  // leaves with no ancestor at the requested level
};

struct RecallOptions {
  // Default gallery is every test image. The restricted variant limits each
  // query to its own group plus that group's hard-negative groups.
  bool restricted_gallery = false;
};

namespace detail {

struct Gallery {
  std::vector<int> leaf_ids;          // ascending
  std::vector<Embedding> embeddings;  // aligned with leaf_ids
};

inline Gallery embed_gallery(const EncoderParams& params, const Corpus& corpus,
                             std::vector<int> test_leaves) {
  std::sort(test_leaves.begin(), test_leaves.end());
  Gallery g;
  g.leaf_ids = std::move(test_leaves);
  g.embeddings.reserve(g.leaf_ids.size());
  for (int leaf : g.leaf_ids) {
    g.embeddings.push_back(encode_image(corpus.by_id(leaf).image_features, params));
  }
  return g;
}

// Top-1 by cosine, ties to the lowest leaf_id (ascending scan, strict >).
inline int argmax_leaf(const Gallery& gallery, const Embedding& query,
                       const std::set<int>* mask) {
  int best_leaf = -1;
  double best = 0.0;
  for (std::size_t i = 0; i < gallery.leaf_ids.size(); ++i) {
    if (mask && mask->count(gallery.leaf_ids[i]) == 0) continue;
    const double s = cosine_similarity(query, gallery.embeddings[i]);
    if (best_leaf < 0 || s > best) {
      best = s;
      best_leaf = gallery.leaf_ids[i];
    }
  }
  return best_leaf;
}

inline std::string level_query_text(const ConceptDag& dag, const std::string& node_id) {
  const ConceptNode& node = dag.nodes.at(node_id);
  return node.generalized_caption ? *node.generalized_caption : node.concept_text;
}

inline std::set<int> restricted_mask(const ConceptDag& dag, const Gallery& gallery,
                                     const std::string& group_id) {
  std::set<int> allowed;
  auto add_group = [&](const std::string& id) {
    const auto& xs = dag.nodes.at(id).leaf_ids;
    allowed.insert(xs.begin(), xs.end());
  };
  add_group(group_id);
  for (const std::string& neg : dag.nodes.at(group_id).hard_negatives) add_group(neg);
  std::set<int> mask;
  for (int leaf : gallery.leaf_ids) {
    if (allowed.count(leaf)) mask.insert(leaf);
  }
  return mask;
}

}  // namespace detail

// Text-to-image R@1 at one abstraction level. Level 0 queries each test
// leaf's own caption and requires its own image at the top; level k queries
// the generalized caption (else concept text) of the leaf's level-k ancestor
// and requires the top image to sit under the same level-k node. Leaves not
// covered at the level are skipped and tallied.
inline RecallResult recall_at_1(const EncoderParams& params, const Corpus& corpus,
                                const ConceptDag& dag, const std::vector<int>& test_leaves,
                                int level, const RecallOptions& opts = {}) {
  require(!test_leaves.empty(), errc::empty_input, "no test leaves to evaluate");
  require(level >= 0 && level <= dag.l_max, errc::invalid_argument,
          "level must be in [0, l_max]");
  const detail::Gallery gallery = detail::embed_gallery(params, corpus, test_leaves);

  RecallResult result;
  std::map<std::string, Embedding> query_cache;  // one embedding per distinct node text
  for (int leaf : gallery.leaf_ids) {
    std::optional<std::set<int>> mask;
    if (opts.restricted_gallery) {
      auto it = dag.leaf_parent.find(leaf);
      require(it != dag.leaf_parent.end(), errc::missing_ancestor,
              "test leaf " + std::to_string(leaf) + " is not in the dag");
      mask = detail::restricted_mask(dag, gallery, it->second);
    }

    if (level == 0) {
      const Embedding query =
          encode_text(featurize_text(corpus.by_id(leaf).caption, params.dims.text_buckets), params);
      const int top = detail::argmax_leaf(gallery, query, mask ? &*mask : nullptr);
      ++result.n_queries;
      if (top == leaf) ++result.hits;
      continue;
    }

    const std::set<std::string> ancestors = dag.ancestors_at_level(leaf, level);
    if (ancestors.empty()) {
      ++result.skipped;
      continue;
    }
    const std::string& query_node = *ancestors.begin();  // deterministic canonical choice
    const std::string text = detail::level_query_text(dag, query_node);
    auto it = query_cache.find(text);
    if (it == query_cache.end()) {
      it = query_cache
               .emplace(text,
                        encode_text(featurize_text(text, params.dims.text_buckets), params))
               .first;
    }
    const int top = detail::argmax_leaf(gallery, it->second, mask ? &*mask : nullptr);
    ++result.n_queries;
    if (top >= 0 && dag.ancestors_at_level(top, level).count(query_node)) ++result.hits;
  }

  require(result.n_queries > 0, errc::missing_ancestor,
          "no test leaf is covered at level " + std::to_string(level));
  result.r_at_1 = static_cast<double>(result.hits) / static_cast<double>(result.n_queries);
  return result;
}

// ---------------------------------------------------------------------------
// Reports.

struct LevelEntry {
  int level = 0;           // 0 = captions
  std::string name;        // "captions", "l1", ...
  double r_at_1 = 0.0;
  int hits = 0;
  int n_queries = 0;
  int skipped = 0;
};

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> attributes;  // e.g. loss=pairwise, pretrained=no
  std::vector<LevelEntry> levels;

  const LevelEntry& at_level(int level) const {
    for (const LevelEntry& e : levels) {
      if (e.level == level) return e;
    }
    raise(errc::invalid_argument, "report has no level " + std::to_string(level));
  }
};

inline std::string level_name(int level) {
  return level == 0 ? "captions" : "l" + std::to_string(level);
}

// R@1 for level 0 and every tier 1..l_max.
inline EvalReport evaluate_all(const EncoderParams& params, const Corpus& corpus,
                               const ConceptDag& dag, const std::vector<int>& test_leaves,
                               const std::string& model_id, const std::string& dataset_id,
                               std::uint64_t seed, const std::string& config_hash,
                               const RecallOptions& opts = {}) {
  EvalReport report;
  report.model_id = model_id;
  report.dataset_id = dataset_id;
  report.seed = seed;
  report.config_hash = config_hash;
  for (int level = 0; level <= dag.l_max; ++level) {
    const RecallResult r = recall_at_1(params, corpus, dag, test_leaves, level, opts);
    LevelEntry e;
    e.level = level;
    e.name = level_name(level);
    e.r_at_1 = r.r_at_1;
    e.hits = r.hits;
    e.n_queries = r.n_queries;
    e.skipped = r.skipped;
    report.levels.push_back(e);
  }
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json levels = nlohmann::json::array();
  for (const LevelEntry& e : report.levels) {
    levels.push_back(nlohmann::json{{"level", e.level},
                                    {"name", e.name},
                                    {"r_at_1", e.r_at_1},
                                    {"hits", e.hits},
                                    {"n_queries", e.n_queries},
                                    {"skipped", e.skipped}});
  }
  return nlohmann::json{{"format_version", kReportFormatVersion},
                        {"kind", "glass.report"},
                        {"model_id", report.model_id},
                        {"dataset_id", report.dataset_id},
                        {"seed", report.seed},
                        {"config_hash", report.config_hash},
                        {"attributes", report.attributes},
                        {"levels", levels}};
}

inline void save_report(const EvalReport& report, const std::string& json_path,
                        const std::string& csv_path = "") {
  std::ofstream out(json_path);
  require(static_cast<bool>(out), errc::io_failure, "cannot write " + json_path);
  out << report_to_json(report).dump(2) << "\n";
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    require(static_cast<bool>(csv), errc::io_failure, "cannot write " + csv_path);
    csv << "level,r_at_1,hits,n_queries,skipped\n";
    csv.precision(17);
    for (const LevelEntry& e : report.levels) {
      csv << e.name << "," << e.r_at_1 << "," << e.hits << "," << e.n_queries << "," << e.skipped
          << "\n";
    }
  }
}

inline EvalReport load_report(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io_failure, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    raise(errc::schema_version_mismatch, path + ": " + e.what());
  }
  EvalReport report;
  try {
    require(j.at("format_version").get<int>() == kReportFormatVersion,
            errc::schema_version_mismatch, "unsupported report format_version");
    report.model_id = j.at("model_id").get<std::string>();
    report.dataset_id = j.at("dataset_id").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.config_hash = j.value("config_hash", "");
    if (j.contains("attributes")) {
      report.attributes = j["attributes"].get<std::map<std::string, std::string>>();
    }
    for (const auto& e : j.at("levels")) {
      LevelEntry entry;
      entry.level = e.at("level").get<int>();
      entry.name = e.at("name").get<std::string>();
      entry.r_at_1 = e.at("r_at_1").get<double>();
      entry.hits = e.at("hits").get<int>();
      entry.n_queries = e.at("n_queries").get<int>();
      entry.skipped = e.value("skipped", 0);
      report.levels.push_back(entry);
    }
  } catch (const error&) {
    throw;
  } catch (const std::exception& e) {
    raise(errc::schema_version_mismatch, std::string("malformed report: ") + e.what());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Model comparison: per-level deltas against a baseline report plus average
// gains per two-valued attribute over matched report pairs.

struct FactorGain {
  std::string factor;
  std::string reference_value;  // gains are (other - reference)
  std::string other_value;
  std::vector<double> gain_per_level;
  int pair_count = 0;
};

struct Comparison {
  std::vector<std::string> level_names;
  std::vector<std::string> model_ids;
  std::vector<std::vector<double>> r_at_1;    // [model][level]
  std::vector<std::vector<double>> delta;     // [model][level] vs baseline
  std::size_t baseline_index = 0;
  std::vector<FactorGain> factor_gains;
};

inline Comparison compare_models(const std::vector<EvalReport>& reports,
                                 std::size_t baseline_index = 0) {
  require(!reports.empty(), errc::empty_input, "no reports to compare");
  require(baseline_index < reports.size(), errc::invalid_argument, "baseline index out of range");
  const EvalReport& base = reports[baseline_index];
  Comparison cmp;
  cmp.baseline_index = baseline_index;
  for (const LevelEntry& e : base.levels) cmp.level_names.push_back(e.name);

  for (const EvalReport& r : reports) {
    require(r.dataset_id == base.dataset_id, errc::incompatible_reports,
            "reports span different datasets: " + r.dataset_id + " vs " + base.dataset_id);
    require(r.levels.size() == base.levels.size(), errc::incompatible_reports,
            "reports have different level sets");
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      require(r.levels[i].name == base.levels[i].name, errc::incompatible_reports,
              "reports have different level sets");
    }
    cmp.model_ids.push_back(r.model_id);
    std::vector<double> rs, ds;
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      rs.push_back(r.levels[i].r_at_1);
      ds.push_back(r.levels[i].r_at_1 - base.levels[i].r_at_1);
    }
    cmp.r_at_1.push_back(std::move(rs));
    cmp.delta.push_back(std::move(ds));
  }

  // Factor gains: for every attribute key taking exactly two values, average
  // (other - reference) over report pairs that agree on all other attributes.
  std::set<std::string> keys;
  for (const EvalReport& r : reports) {
    for (const auto& [k, v] : r.attributes) keys.insert(k);
  }
  for (const std::string& key : keys) {
    std::set<std::string> values;
    for (const EvalReport& r : reports) {
      auto it = r.attributes.find(key);
      if (it != r.attributes.end()) values.insert(it->second);
    }
    if (values.size() != 2) continue;
    std::string reference = *values.begin();
    auto bit = base.attributes.find(key);
    if (bit != base.attributes.end()) reference = bit->second;
    std::string other;
    for (const std::string& v : values) {
      if (v != reference) other = v;
    }

    FactorGain gain;
    gain.factor = key;
    gain.reference_value = reference;
    gain.other_value = other;
    gain.gain_per_level.assign(cmp.level_names.size(), 0.0);
    for (std::size_t a = 0; a < reports.size(); ++a) {
      for (std::size_t b = 0; b < reports.size(); ++b) {
        const auto& ra = reports[a].attributes;
        const auto& rb = reports[b].attributes;
        auto ia = ra.find(key);
        auto ib = rb.find(key);
        if (ia == ra.end() || ib == rb.end()) continue;
        if (ia->second != reference || ib->second != other) continue;
        std::map<std::string, std::string> rest_a = ra, rest_b = rb;
        rest_a.erase(key);
        rest_b.erase(key);
        if (rest_a != rest_b) continue;
        for (std::size_t i = 0; i < cmp.level_names.size(); ++i) {
          gain.gain_per_level[i] += reports[b].levels[i].r_at_1 - reports[a].levels[i].r_at_1;
        }
        gain.pair_count += 1;
      }
    }
    if (gain.pair_count > 0) {
      for (double& v : gain.gain_per_level) v /= static_cast<double>(gain.pair_count);
      cmp.factor_gains.push_back(std::move(gain));
    }
  }
  return cmp;
}

inline void save_comparison(const Comparison& cmp, const std::string& csv_path,
                            const std::string& json_path = "") {
  std::ofstream csv(csv_path);
  require(static_cast<bool>(csv), errc::io_failure, "cannot write " + csv_path);
  csv << "model,level,r_at_1,delta_vs_baseline\n";
  csv.precision(17);
  for (std::size_t m = 0; m < cmp.model_ids.size(); ++m) {
    for (std::size_t i = 0; i < cmp.level_names.size(); ++i) {
      csv << cmp.model_ids[m] << "," << cmp.level_names[i] << "," << cmp.r_at_1[m][i] << ","
          << cmp.delta[m][i] << "\n";
    }
  }
  if (!json_path.empty()) {
    nlohmann::json gains = nlohmann::json::array();
    for (const FactorGain& g : cmp.factor_gains) {
      gains.push_back(nlohmann::json{{"factor", g.factor},
                                     {"reference_value", g.reference_value},
                                     {"other_value", g.other_value},
                                     {"gain_per_level", g.gain_per_level},
                                     {"pair_count", g.pair_count}});
    }
    nlohmann::json j{{"kind", "glass.comparison"},
                     {"levels", cmp.level_names},
                     {"models", cmp.model_ids},
                     {"baseline", cmp.model_ids[cmp.baseline_index]},
                     {"r_at_1", cmp.r_at_1},
                     {"delta_vs_baseline", cmp.delta},
                     {"factor_gains", gains}};
    std::ofstream out(json_path);
    require(static_cast<bool>(out), errc::io_failure, "cannot write " + json_path);
    out << j.dump(2) << "\n";
  }
}

}  // namespace glass
