#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "glass/encoders.hpp"
#include "glass/error.hpp"
#include "glass/numerics.hpp"
#include "glass/provider.hpp"
#include "glass/version.hpp"

namespace glass {

// ---------------------------------------------------------------------------
// Corpus: the flat caption/feature leaves the forge consumes.

struct LeafRecord {
  int leaf_id = 0;
  std::string caption;
  std::vector<std::string> alt_captions;
  std::vector<double> image_features;
};

struct Corpus {
  std::vector<LeafRecord> leaves;  // sorted by leaf_id

  const LeafRecord& by_id(int leaf_id) const {
    auto it = std::lower_bound(leaves.begin(), leaves.end(), leaf_id,
                               [](const LeafRecord& r, int id) { return r.leaf_id < id; });
    require(it != leaves.end() && it->leaf_id == leaf_id, errc::invalid_argument,
            "unknown leaf_id " + std::to_string(leaf_id));
    return *it;
  }

  int feature_dim() const { return leaves.empty() ? 0 : static_cast<int>(leaves[0].image_features.size()); }
};

inline void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), errc::io_failure, "cannot write " + path);
  for (const LeafRecord& leaf : corpus.leaves) {
    nlohmann::json j{{"leaf_id", leaf.leaf_id},
                     {"caption", leaf.caption},
                     {"alt_captions", leaf.alt_captions},
                     {"image_features", leaf.image_features}};
    out << j.dump() << "\n";
  }
}

inline Corpus load_corpus_jsonl(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io_failure, "cannot open " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      raise(errc::io_failure, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    LeafRecord leaf;
    leaf.leaf_id = j.at("leaf_id").get<int>();
    leaf.caption = j.at("caption").get<std::string>();
    if (j.contains("alt_captions")) leaf.alt_captions = j["alt_captions"].get<std::vector<std::string>>();
    if (j.contains("image_features")) {
      leaf.image_features = j["image_features"].get<std::vector<double>>();
    } else if (j.contains("image_feature_ref")) {
      const std::string ref = (base / j["image_feature_ref"].get<std::string>()).string();
      std::ifstream rf(ref);
      require(static_cast<bool>(rf), errc::io_failure, "cannot open feature ref " + ref);
      leaf.image_features = nlohmann::json::parse(rf).get<std::vector<double>>();
    } else {
      raise(errc::io_failure, path + ":" + std::to_string(line_no) +
                                  ": record needs image_features or image_feature_ref");
    }
    corpus.leaves.push_back(std::move(leaf));
  }
  std::sort(corpus.leaves.begin(), corpus.leaves.end(),
            [](const LeafRecord& a, const LeafRecord& b) { return a.leaf_id < b.leaf_id; });
  return corpus;
}

// ---------------------------------------------------------------------------
// Concept DAG.

struct ConceptNode {
  std::string node_id;
  int level = 1;
  std::string concept_text;
  std::optional<std::string> generalized_caption;
  std::set<std::string> parents;
  std::set<std::string> children;  // node ids one tier down; empty at level 1
  std::vector<int> leaf_ids;       // sorted
  std::set<std::string> hard_negatives;

  int leaf_count() const { return static_cast<int>(leaf_ids.size()); }
};

struct MergeAuditEntry {
  std::string merged_id;
  std::string into_id;
  double cosine = 0.0;
  int merged_leaves = 0;
  int into_leaves = 0;
};

struct ForgeStats {
  int total_pairs = 0;
  std::vector<int> nodes_per_level;  // index 0 = level 1
  double avg_leaves_per_group = 0.0;
  int merges = 0;
  int removed_groups = 0;
  int removed_leaves = 0;
};

// Echo of the settings a dag was forged with, kept in the dag file.
struct ForgeSettings {
  int size_min = 0;
  double sim_min = 0.0;
  double hard_neg_threshold = 0.0;
  std::string embedder_id;
  std::string provider_id;
};

struct ConceptDag {
  int l_max = 0;
  std::map<int, std::string> leaf_parent;  // leaf_id -> level-1 node id
  std::map<std::string, ConceptNode> nodes;
  std::vector<MergeAuditEntry> merge_audit;
  ForgeStats stats;
  ForgeSettings settings;

  static std::string node_id_for(int level, const std::string& concept_text) {
    return "l" + std::to_string(level) + ":" + concept_text;
  }

  std::vector<std::string> ids_at_level(int level) const {
    std::vector<std::string> out;
    for (const auto& [id, node] : nodes) {
      if (node.level == level) out.push_back(id);
    }
    return out;  // std::map keeps them sorted
  }

  std::vector<std::string> group_ids() const { return ids_at_level(1); }

  // All ancestor node ids of a leaf at the given level (a DAG may have
  // several); empty set if the leaf is not covered there.
  std::set<std::string> ancestors_at_level(int leaf_id, int level) const {
    std::set<std::string> frontier;
    auto it = leaf_parent.find(leaf_id);
    if (it == leaf_parent.end()) return {};
    frontier.insert(it->second);
    int cur = 1;
    while (cur < level) {
      std::set<std::string> next;
      for (const std::string& id : frontier) {
        const auto& parents = nodes.at(id).parents;
        next.insert(parents.begin(), parents.end());
      }
      frontier = std::move(next);
      ++cur;
      if (frontier.empty()) break;
    }
    return frontier;
  }

  // Rebuild leaf sets bottom-up and drop ancestors left with no leaves.
  void recompute_leaf_sets() {
    for (auto& [id, node] : nodes) {
      if (node.level > 1) node.leaf_ids.clear();
    }
    for (auto& [id, node] : nodes) {
      if (node.level != 1) continue;
      node.leaf_ids.clear();
    }
    for (const auto& [leaf_id, parent] : leaf_parent) {
      nodes.at(parent).leaf_ids.push_back(leaf_id);
    }
    for (int level = 2; level <= l_max; ++level) {
      for (auto& [id, node] : nodes) {
        if (node.level != level) continue;
        std::set<int> acc;
        for (const std::string& child : node.children) {
          const auto& xs = nodes.at(child).leaf_ids;
          acc.insert(xs.begin(), xs.end());
        }
        node.leaf_ids.assign(acc.begin(), acc.end());
      }
    }
    // Remove empty nodes (level >= 2 whose subtree lost all leaves, and
    // level-1 nodes without leaves).
    std::vector<std::string> dead;
    for (const auto& [id, node] : nodes) {
      if (node.leaf_ids.empty()) dead.push_back(id);
    }
    for (const std::string& id : dead) erase_node(id);
  }

  void erase_node(const std::string& id) {
    auto it = nodes.find(id);
    if (it == nodes.end()) return;
    for (const std::string& p : it->second.parents) {
      auto pit = nodes.find(p);
      if (pit != nodes.end()) pit->second.children.erase(id);
    }
    for (const std::string& c : it->second.children) {
      auto cit = nodes.find(c);
      if (cit != nodes.end()) cit->second.parents.erase(id);
    }
    for (auto& [nid, node] : nodes) node.hard_negatives.erase(id);
    nodes.erase(it);
  }

  // Structural invariants: level-stratified edges, consistent leaf sets,
  // symmetric irreflexive hard negatives. Throws on violation.
  void validate() const {
    for (const auto& [id, node] : nodes) {
      require(node.level >= 1 && node.level <= l_max, errc::invalid_spec,
              "node level out of range: " + id);
      for (const std::string& p : node.parents) {
        auto pit = nodes.find(p);
        require(pit != nodes.end(), errc::invalid_spec, "dangling parent " + p);
        require(pit->second.level == node.level + 1, errc::invalid_spec,
                "edge does not span exactly one level: " + id + " -> " + p);
        require(pit->second.children.count(id) == 1, errc::invalid_spec,
                "parent/child sets disagree: " + id);
      }
      for (const std::string& c : node.children) {
        auto cit = nodes.find(c);
        require(cit != nodes.end(), errc::invalid_spec, "dangling child " + c);
        require(cit->second.level == node.level - 1, errc::invalid_spec,
                "edge does not span exactly one level: " + c + " -> " + id);
      }
      if (node.level > 1) {
        std::set<int> acc;
        for (const std::string& c : node.children) {
          const auto& xs = nodes.at(c).leaf_ids;
          acc.insert(xs.begin(), xs.end());
        }
        require(std::vector<int>(acc.begin(), acc.end()) == node.leaf_ids, errc::invalid_spec,
                "leaf set is not the union of children: " + id);
      }
      for (const std::string& neg : node.hard_negatives) {
        require(neg != id, errc::invalid_spec, "self hard-negative: " + id);
        auto nit = nodes.find(neg);
        require(nit != nodes.end(), errc::invalid_spec, "dangling hard negative " + neg);
        require(nit->second.level == node.level, errc::invalid_spec,
                "hard negative crosses levels: " + id);
        require(nit->second.hard_negatives.count(id) == 1, errc::invalid_spec,
                "hard negatives not symmetric: " + id + " / " + neg);
      }
    }
    for (const auto& [leaf_id, parent] : leaf_parent) {
      auto it = nodes.find(parent);
      require(it != nodes.end() && it->second.level == 1, errc::invalid_spec,
              "leaf " + std::to_string(leaf_id) + " not attached to a group node");
      require(std::binary_search(it->second.leaf_ids.begin(), it->second.leaf_ids.end(), leaf_id),
              errc::invalid_spec, "leaf missing from its group's leaf set");
    }
  }
};

// ---------------------------------------------------------------------------
// Concept text embedding for merging and mining.

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::string id() const = 0;
  virtual Embedding embed(const std::string& text) = 0;
};

// Hashed trigram counts pushed through a fixed seeded random projection;
// forging never needs a network or a trained model.
class TrigramEmbedder : public TextEmbedder {
 public:
  TrigramEmbedder(int buckets = 512, int dim = 64, std::uint64_t seed = 0x9e3779b9)
      : buckets_(buckets), dim_(dim), seed_(seed) {
    Rng rng = Rng(seed).derive("trigram-embedder");
    proj_.resize(static_cast<std::size_t>(buckets_) * static_cast<std::size_t>(dim_));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    for (double& v : proj_) v = scale * rng.next_normal();
  }

  std::string id() const override {
    return "trigram-b" + std::to_string(buckets_) + "-d" + std::to_string(dim_) + "-s" +
           std::to_string(seed_);
  }

  Embedding embed(const std::string& text) override {
    const TextFeatures f = featurize_text(text, buckets_);
    Embedding out(static_cast<std::size_t>(dim_), 0.0);
    for (const auto& [idx, cnt] : f.counts) {
      const double* row = proj_.data() + static_cast<std::size_t>(idx) * static_cast<std::size_t>(dim_);
      for (int k = 0; k < dim_; ++k) out[static_cast<std::size_t>(k)] += cnt * row[k];
    }
    return l2_normalize(out);
  }

 private:
  int buckets_;
  int dim_;
  std::uint64_t seed_;
  std::vector<double> proj_;
};

// ---------------------------------------------------------------------------
// Forge configuration.

struct ForgeConfig {
  int l_max = 4;
  int size_min = 5;
  double sim_min = 0.9;
  double hard_neg_threshold = 0.85;
  std::shared_ptr<AbstractionProvider> provider;
  std::shared_ptr<TextEmbedder> embedder = std::make_shared<TrigramEmbedder>();
  std::string cache_dir;   // provider response cache; empty = memory only
  int provider_parallelism = 4;
};

inline void validate_forge_config(const ForgeConfig& cfg) {
  require(cfg.l_max >= 1, errc::invalid_spec, "l_max must be >= 1");
  require(cfg.size_min >= 1, errc::invalid_spec, "size_min must be >= 1");
  require(cfg.sim_min > 0.0 && cfg.sim_min <= 1.0, errc::invalid_spec, "sim_min must be in (0,1]");
  require(cfg.hard_neg_threshold > 0.0 && cfg.hard_neg_threshold <= 1.0, errc::invalid_spec,
          "hard_neg_threshold must be in (0,1]");
  require(cfg.provider != nullptr, errc::invalid_spec, "forge needs an abstraction provider");
  require(cfg.embedder != nullptr, errc::invalid_spec, "forge needs a text embedder");
  require(cfg.provider_parallelism >= 1, errc::invalid_spec, "provider_parallelism must be >= 1");
}

// ---------------------------------------------------------------------------
// Stage 1: abstraction chains.

// chain[0] is the level-1 concept of the caption(s); each further entry
// abstracts the previous one. Length is exactly l_max.
inline std::vector<std::string> infer_abstraction_chain(const std::vector<std::string>& captions,
                                                        int l_max,
                                                        AbstractionProvider& provider) {
  require(l_max >= 1, errc::invalid_argument, "l_max must be >= 1");
  require(!captions.empty() && !normalize_text(captions.front()).empty(), errc::empty_caption,
          "cannot infer a chain from an empty caption");
  std::vector<std::string> chain;
  chain.reserve(static_cast<std::size_t>(l_max));
  std::string concept_text = normalize_text(provider.abstract(captions));
  require(!concept_text.empty(), errc::empty_concept, "provider returned a blank concept");
  chain.push_back(concept_text);
  for (int level = 1; level < l_max; ++level) {
    concept_text = normalize_text(provider.abstract({chain.back()}));
    require(!concept_text.empty(), errc::empty_concept, "provider returned a blank concept");
    chain.push_back(concept_text);
  }
  return chain;
}

inline std::vector<std::string> infer_abstraction_chain(const std::string& caption, int l_max,
                                                        AbstractionProvider& provider) {
  return infer_abstraction_chain(std::vector<std::string>{caption}, l_max, provider);
}

// ---------------------------------------------------------------------------
// Stage 2: DAG construction. Concepts with identical normalized text at the
// same level are one node.

inline ConceptDag build_dag(const std::map<int, std::vector<std::string>>& chains) {
  ConceptDag dag;
  if (chains.empty()) return dag;
  dag.l_max = static_cast<int>(chains.begin()->second.size());
  require(dag.l_max >= 1, errc::inconsistent_chain_length, "empty abstraction chain");

  auto ensure_node = [&dag](int level, const std::string& concept_text) -> ConceptNode& {
    const std::string id = ConceptDag::node_id_for(level, concept_text);
    auto [it, inserted] = dag.nodes.try_emplace(id);
    if (inserted) {
      it->second.node_id = id;
      it->second.level = level;
      it->second.concept_text = concept_text;
    }
    return it->second;
  };

  for (const auto& [leaf_id, raw_chain] : chains) {
    require(static_cast<int>(raw_chain.size()) == dag.l_max, errc::inconsistent_chain_length,
            "chain for leaf " + std::to_string(leaf_id) + " has length " +
                std::to_string(raw_chain.size()) + ", expected " + std::to_string(dag.l_max));
    std::vector<std::string> chain;
    for (const std::string& c : raw_chain) {
      const std::string norm = normalize_text(c);
      require(!norm.empty(), errc::empty_concept,
              "blank concept in chain of leaf " + std::to_string(leaf_id));
      chain.push_back(norm);
    }
    ConceptNode& group = ensure_node(1, chain[0]);
    dag.leaf_parent[leaf_id] = group.node_id;
    group.leaf_ids.push_back(leaf_id);
    for (int level = 2; level <= dag.l_max; ++level) {
      ConceptNode& child = ensure_node(level - 1, chain[static_cast<std::size_t>(level - 2)]);
      ConceptNode& parent = ensure_node(level, chain[static_cast<std::size_t>(level - 1)]);
      child.parents.insert(parent.node_id);
      parent.children.insert(child.node_id);
    }
  }
  for (auto& [id, node] : dag.nodes) {
    if (node.level == 1) {
      std::sort(node.leaf_ids.begin(), node.leaf_ids.end());
      node.leaf_ids.erase(std::unique(node.leaf_ids.begin(), node.leaf_ids.end()),
                          node.leaf_ids.end());
    }
  }
  dag.recompute_leaf_sets();
  return dag;
}

// ---------------------------------------------------------------------------
// Stage 3: merge or prune undersized groups.
//
// Undersized group nodes are processed in ascending (leaf_count, node_id)
// order against current counts. A node whose most similar sibling clears
// sim_min is merged (smaller into larger); otherwise the node and its leaves
// are dropped. Repeats until every surviving group satisfies size_min.

inline void merge_small_nodes(ConceptDag& dag, int size_min, double sim_min,
                              TextEmbedder& embedder) {
  std::map<std::string, Embedding> emb;
  auto embedding_of = [&](const std::string& id) -> const Embedding& {
    auto it = emb.find(id);
    if (it == emb.end()) it = emb.emplace(id, embedder.embed(dag.nodes.at(id).concept_text)).first;
    return it->second;
  };

  auto remove_group = [&dag](const std::string& id) {
    ConceptNode& node = dag.nodes.at(id);
    dag.stats.removed_leaves += node.leaf_count();
    for (int leaf : node.leaf_ids) dag.leaf_parent.erase(leaf);
    dag.erase_node(id);
    dag.stats.removed_groups += 1;
  };

  while (true) {
    std::vector<std::pair<int, std::string>> undersized;
    for (const auto& [id, node] : dag.nodes) {
      if (node.level == 1 && node.leaf_count() < size_min) {
        undersized.emplace_back(node.leaf_count(), id);
      }
    }
    if (undersized.empty()) break;
    std::sort(undersized.begin(), undersized.end());
    const std::string id = undersized.front().second;

    std::string best;
    double best_cos = -2.0;
    for (const auto& [other_id, other] : dag.nodes) {
      if (other.level != 1 || other_id == id) continue;
      const double c = cosine_similarity(embedding_of(id), embedding_of(other_id));
      if (c > best_cos) {
        best_cos = c;
        best = other_id;
      }
    }

    if (best.empty() || best_cos < sim_min) {
      remove_group(id);
      continue;
    }

    // Smaller merges into larger; equal sizes keep the smaller node_id.
    const ConceptNode& a = dag.nodes.at(id);
    const ConceptNode& b = dag.nodes.at(best);
    std::string src = id, dst = best;
    if (a.leaf_count() > b.leaf_count()) std::swap(src, dst);
    if (a.leaf_count() == b.leaf_count() && dst < src) std::swap(src, dst);

    dag.merge_audit.push_back({src, dst, best_cos, dag.nodes.at(src).leaf_count(),
                               dag.nodes.at(dst).leaf_count()});
    ConceptNode& dst_node = dag.nodes.at(dst);
    for (int leaf : dag.nodes.at(src).leaf_ids) {
      dag.leaf_parent[leaf] = dst;
      dst_node.leaf_ids.push_back(leaf);
    }
    std::sort(dst_node.leaf_ids.begin(), dst_node.leaf_ids.end());
    dag.erase_node(src);
    dag.stats.merges += 1;
  }

  dag.recompute_leaf_sets();
}

// ---------------------------------------------------------------------------
// Stage 4: generalized captions for every group node.

inline void generalize_captions(ConceptDag& dag, const Corpus& corpus,
                                AbstractionProvider& provider) {
  for (auto& [id, node] : dag.nodes) {
    if (node.level != 1) continue;
    std::vector<std::string> ancestors;
    std::set<std::string> frontier = {id};
    for (int level = 2; level <= dag.l_max; ++level) {
      std::set<std::string> next;
      for (const std::string& f : frontier) {
        const auto& parents = dag.nodes.at(f).parents;
        next.insert(parents.begin(), parents.end());
      }
      for (const std::string& p : next) ancestors.push_back(dag.nodes.at(p).concept_text);
      frontier = std::move(next);
    }
    std::vector<std::string> captions;
    for (int leaf : node.leaf_ids) captions.push_back(corpus.by_id(leaf).caption);
    node.generalized_caption = provider.generalize(node.concept_text, ancestors, captions);
  }
}

// ---------------------------------------------------------------------------
// Stage 5: hard negatives among group nodes.

inline void mine_hard_negatives(ConceptDag& dag, double threshold, TextEmbedder& embedder) {
  const std::vector<std::string> groups = dag.group_ids();
  std::vector<Embedding> emb;
  emb.reserve(groups.size());
  for (const std::string& id : groups) emb.push_back(embedder.embed(dag.nodes.at(id).concept_text));
  for (auto& [id, node] : dag.nodes) {
    if (node.level == 1) node.hard_negatives.clear();
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      if (cosine_similarity(emb[i], emb[j]) > threshold) {
        dag.nodes.at(groups[i]).hard_negatives.insert(groups[j]);
        dag.nodes.at(groups[j]).hard_negatives.insert(groups[i]);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Full pipeline.

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr first_error;
  std::size_t next = 0;
  std::mutex next_mutex;
  const int nthreads = std::min<int>(workers, static_cast<int>(count));
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next >= count) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

inline ForgeStats compute_stats(const ConceptDag& dag) {
  ForgeStats stats = dag.stats;
  stats.total_pairs = static_cast<int>(dag.leaf_parent.size());
  stats.nodes_per_level.assign(static_cast<std::size_t>(std::max(dag.l_max, 0)), 0);
  for (const auto& [id, node] : dag.nodes) {
    stats.nodes_per_level[static_cast<std::size_t>(node.level - 1)] += 1;
  }
  const int groups = dag.l_max >= 1 && !stats.nodes_per_level.empty() ? stats.nodes_per_level[0] : 0;
  stats.avg_leaves_per_group =
      groups > 0 ? static_cast<double>(stats.total_pairs) / static_cast<double>(groups) : 0.0;
  return stats;
}

inline ConceptDag forge(const Corpus& corpus, const ForgeConfig& cfg) {
  validate_forge_config(cfg);
  if (corpus.leaves.empty()) {
    ConceptDag empty;
    empty.l_max = cfg.l_max;
    empty.stats = compute_stats(empty);
    empty.settings = ForgeSettings{cfg.size_min, cfg.sim_min, cfg.hard_neg_threshold,
                                   cfg.embedder->id(), cfg.provider->id()};
    return empty;
  }

  CachingProvider provider(cfg.provider, cfg.cache_dir);

  std::vector<std::vector<std::string>> chain_slots(corpus.leaves.size());
  detail::parallel_for(corpus.leaves.size(), cfg.provider_parallelism, [&](std::size_t i) {
    const LeafRecord& leaf = corpus.leaves[i];
    std::vector<std::string> captions = {leaf.caption};
    captions.insert(captions.end(), leaf.alt_captions.begin(), leaf.alt_captions.end());
    chain_slots[i] = infer_abstraction_chain(captions, cfg.l_max, provider);
  });
  std::map<int, std::vector<std::string>> chains;
  for (std::size_t i = 0; i < corpus.leaves.size(); ++i) {
    chains[corpus.leaves[i].leaf_id] = std::move(chain_slots[i]);
  }

  ConceptDag dag = build_dag(chains);
  merge_small_nodes(dag, cfg.size_min, cfg.sim_min, *cfg.embedder);
  generalize_captions(dag, corpus, provider);
  mine_hard_negatives(dag, cfg.hard_neg_threshold, *cfg.embedder);
  dag.stats = compute_stats(dag);
  dag.settings = ForgeSettings{cfg.size_min, cfg.sim_min, cfg.hard_neg_threshold,
                               cfg.embedder->id(), cfg.provider->id()};
  dag.validate();
  return dag;
}

// ---------------------------------------------------------------------------
// Synthetic taxonomy: a balanced concept tree plus a corpus whose captions
// lexically encode group membership, for provider-free testing.

struct SynthSpec {
  // Top-down: tier_branching[0] = node count at the most abstract tier,
  // each following entry = children per node. Size = number of concept
  // tiers (l_max); the product is the group count.
  std::vector<int> tier_branching = {2, 2, 2, 2};
  int leaves_per_group = 12;
  int feature_dim = 32;       // D
  double noise_scale = 0.05;  // magnitude of the per-item displacement
};

struct SynthResult {
  Corpus corpus;
  std::map<std::string, std::string> parent_of;  // term -> parent (incl. leaf keys)
  std::map<std::string, int> concept_level;
  std::map<std::string, std::vector<int>> group_leaves;  // group concept -> leaf ids
  int l_max = 0;
};

namespace detail {

// Unique pronounceable pseudo-word, drawn from a consonant-vowel syllable
// grid. Keeps concept names lexically distinct for trigram features.
inline std::string synth_word(Rng& rng, std::set<std::string>& used) {
  constexpr const char* consonants = "bdfgklmnprstvz";
  constexpr const char* vowels = "aeiou";
  while (true) {
    std::string w;
    const int syllables = 2 + static_cast<int>(rng.next_below(2));
    for (int s = 0; s < syllables; ++s) {
      w.push_back(consonants[rng.next_below(14)]);
      w.push_back(vowels[rng.next_below(5)]);
    }
    if (used.insert(w).second) return w;
  }
}

}  // namespace detail

// Concept names extend their parent's name by one pseudo-word, so every leaf
// caption lexically encodes its full ancestry ("leaf:zubo_nema_tiko item 03"
// under level-2 concept "zubo nema"). Each leaf's image vector is its group
// prototype plus noise_scale times a per-item displacement; displacements are
// keyed by the item index and shared across groups, so pair identity is
// recoverable from held-out captions.
inline SynthResult synth_taxonomy(const SynthSpec& spec, Rng& rng) {
  require(!spec.tier_branching.empty(), errc::invalid_spec, "tier_branching must be nonempty");
  for (int b : spec.tier_branching) {
    require(b >= 1, errc::invalid_spec, "branching factors must be >= 1");
  }
  require(spec.leaves_per_group >= 1, errc::invalid_spec, "leaves_per_group must be >= 1");
  require(spec.feature_dim >= 1, errc::invalid_spec, "feature_dim must be >= 1");
  require(spec.noise_scale >= 0.0, errc::invalid_spec, "noise_scale must be >= 0");

  SynthResult out;
  out.l_max = static_cast<int>(spec.tier_branching.size());

  Rng name_rng = rng.derive("names");
  std::set<std::string> used_words;

  std::vector<std::string> tier;  // concept names at the current level
  for (int i = 0; i < spec.tier_branching[0]; ++i) {
    const std::string name = detail::synth_word(name_rng, used_words);
    tier.push_back(name);
    out.concept_level[name] = out.l_max;
  }
  for (std::size_t depth = 1; depth < spec.tier_branching.size(); ++depth) {
    const int level = out.l_max - static_cast<int>(depth);
    std::vector<std::string> next;
    for (const std::string& parent : tier) {
      for (int i = 0; i < spec.tier_branching[depth]; ++i) {
        const std::string name = parent + " " + detail::synth_word(name_rng, used_words);
        out.parent_of[name] = parent;
        out.concept_level[name] = level;
        next.push_back(name);
      }
    }
    tier = std::move(next);
  }

  int pad = 2;
  for (int v = spec.leaves_per_group - 1; v >= 100; v /= 10) ++pad;

  std::vector<Embedding> item_styles;
  Rng style_rng = rng.derive("item-style");
  for (int i = 0; i < spec.leaves_per_group; ++i) {
    item_styles.push_back(style_rng.unit_vector(static_cast<std::size_t>(spec.feature_dim)));
  }

  int leaf_id = 0;
  for (const std::string& group : tier) {
    std::string key = group;
    for (char& c : key) {
      if (c == ' ') c = '_';
    }
    out.parent_of[key] = group;
    Rng proto_rng = rng.derive("proto|" + key);
    const Embedding prototype = proto_rng.unit_vector(static_cast<std::size_t>(spec.feature_dim));
    for (int item = 0; item < spec.leaves_per_group; ++item) {
      LeafRecord leaf;
      leaf.leaf_id = leaf_id++;
      std::string num = std::to_string(item);
      while (static_cast<int>(num.size()) < pad) num.insert(num.begin(), '0');
      leaf.caption = "leaf:" + key + " item " + num;
      leaf.image_features = prototype;
      axpy(spec.noise_scale, item_styles[static_cast<std::size_t>(item)], leaf.image_features);
      out.group_leaves[group].push_back(leaf.leaf_id);
      out.corpus.leaves.push_back(std::move(leaf));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DAG serialization: versioned JSON {format_version, config, nodes, edges,
// hard_negatives, stats}. Children/parents/leaf sets are rebuilt on load.

inline nlohmann::json dag_to_json(const ConceptDag& dag) {
  nlohmann::json nodes = nlohmann::json::array();
  nlohmann::json edges = nlohmann::json::array();
  nlohmann::json negs = nlohmann::json::array();
  for (const auto& [id, node] : dag.nodes) {
    nlohmann::json n{{"id", id}, {"level", node.level}, {"concept", node.concept_text}};
    if (node.generalized_caption) n["generalized_caption"] = *node.generalized_caption;
    nodes.push_back(n);
    for (const std::string& p : node.parents) {
      edges.push_back(nlohmann::json{{"child", id}, {"parent", p}});
    }
    if (node.level == 1 && !node.hard_negatives.empty()) {
      negs.push_back(nlohmann::json{
          {"node", id},
          {"negs", std::vector<std::string>(node.hard_negatives.begin(), node.hard_negatives.end())}});
    }
  }
  for (const auto& [leaf_id, parent] : dag.leaf_parent) {
    edges.push_back(nlohmann::json{{"leaf", leaf_id}, {"parent", parent}});
  }
  nlohmann::json audit = nlohmann::json::array();
  for (const MergeAuditEntry& e : dag.merge_audit) {
    audit.push_back(nlohmann::json{{"merged", e.merged_id},
                                   {"into", e.into_id},
                                   {"cosine", e.cosine},
                                   {"merged_leaves", e.merged_leaves},
                                   {"into_leaves", e.into_leaves}});
  }
  return nlohmann::json{
      {"format_version", kDagFormatVersion},
      {"kind", "glass.dag"},
      {"l_max", dag.l_max},
      {"config",
       {{"size_min", dag.settings.size_min},
        {"sim_min", dag.settings.sim_min},
        {"hard_neg_threshold", dag.settings.hard_neg_threshold},
        {"embedder", dag.settings.embedder_id},
        {"provider", dag.settings.provider_id}}},
      {"nodes", nodes},
      {"edges", edges},
      {"hard_negatives", negs},
      {"merge_audit", audit},
      {"stats",
       {{"total_pairs", dag.stats.total_pairs},
        {"nodes_per_level", dag.stats.nodes_per_level},
        {"avg_leaves_per_group", dag.stats.avg_leaves_per_group},
        {"merges", dag.stats.merges},
        {"removed_groups", dag.stats.removed_groups},
        {"removed_leaves", dag.stats.removed_leaves}}}};
}

inline void serialize_dag(const ConceptDag& dag, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), errc::io_failure, "cannot write " + path);
  out << dag_to_json(dag).dump(2) << "\n";
  require(static_cast<bool>(out), errc::io_failure, "write failed for " + path);
}

inline ConceptDag dag_from_json(const nlohmann::json& j) {
  ConceptDag dag;
  try {
    require(j.at("format_version").get<int>() == kDagFormatVersion,
            errc::schema_version_mismatch,
            "unsupported dag format_version " + j.at("format_version").dump());
    dag.l_max = j.at("l_max").get<int>();
    for (const auto& n : j.at("nodes")) {
      ConceptNode node;
      node.node_id = n.at("id").get<std::string>();
      node.level = n.at("level").get<int>();
      node.concept_text = n.at("concept").get<std::string>();
      if (n.contains("generalized_caption")) {
        node.generalized_caption = n["generalized_caption"].get<std::string>();
      }
      dag.nodes[node.node_id] = std::move(node);
    }
    for (const auto& e : j.at("edges")) {
      if (e.contains("leaf")) {
        dag.leaf_parent[e.at("leaf").get<int>()] = e.at("parent").get<std::string>();
        continue;
      }
      const std::string child = e.at("child").get<std::string>();
      const std::string parent = e.at("parent").get<std::string>();
      dag.nodes.at(child).parents.insert(parent);
      dag.nodes.at(parent).children.insert(child);
    }
    for (const auto& hn : j.at("hard_negatives")) {
      ConceptNode& node = dag.nodes.at(hn.at("node").get<std::string>());
      for (const auto& neg : hn.at("negs")) node.hard_negatives.insert(neg.get<std::string>());
    }
    if (j.contains("merge_audit")) {
      for (const auto& a : j["merge_audit"]) {
        dag.merge_audit.push_back({a.at("merged").get<std::string>(),
                                   a.at("into").get<std::string>(), a.at("cosine").get<double>(),
                                   a.at("merged_leaves").get<int>(),
                                   a.at("into_leaves").get<int>()});
      }
    }
    if (j.contains("stats")) {
      const auto& s = j["stats"];
      dag.stats.total_pairs = s.value("total_pairs", 0);
      dag.stats.nodes_per_level = s.value("nodes_per_level", std::vector<int>{});
      dag.stats.avg_leaves_per_group = s.value("avg_leaves_per_group", 0.0);
      dag.stats.merges = s.value("merges", 0);
      dag.stats.removed_groups = s.value("removed_groups", 0);
      dag.stats.removed_leaves = s.value("removed_leaves", 0);
    }
    if (j.contains("config")) {
      const auto& c = j["config"];
      dag.settings.size_min = c.value("size_min", 0);
      dag.settings.sim_min = c.value("sim_min", 0.0);
      dag.settings.hard_neg_threshold = c.value("hard_neg_threshold", 0.0);
      dag.settings.embedder_id = c.value("embedder", "");
      dag.settings.provider_id = c.value("provider", "");
    }
  } catch (const error&) {
    throw;
  } catch (const std::exception& e) {
    raise(errc::schema_version_mismatch, std::string("malformed dag file: ") + e.what());
  }
  for (auto& [id, node] : dag.nodes) {
    if (node.level == 1) node.leaf_ids.clear();
  }
  for (const auto& [leaf_id, parent] : dag.leaf_parent) {
    auto it = dag.nodes.find(parent);
    require(it != dag.nodes.end(), errc::schema_version_mismatch,
            "leaf references unknown node " + parent);
    it->second.leaf_ids.push_back(leaf_id);
  }
  for (auto& [id, node] : dag.nodes) std::sort(node.leaf_ids.begin(), node.leaf_ids.end());
  // Rebuild ancestor leaf sets without dropping nodes.
  for (int level = 2; level <= dag.l_max; ++level) {
    for (auto& [id, node] : dag.nodes) {
      if (node.level != level) continue;
      std::set<int> acc;
      for (const std::string& child : node.children) {
        const auto& xs = dag.nodes.at(child).leaf_ids;
        acc.insert(xs.begin(), xs.end());
      }
      node.leaf_ids.assign(acc.begin(), acc.end());
    }
  }
  return dag;
}

inline ConceptDag load_dag(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), errc::io_failure, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    raise(errc::schema_version_mismatch, path + ": " + e.what());
  }
  return dag_from_json(j);
}

// Structural equality for round-trip checks (ignores stats and audit).
inline bool dag_structurally_equal(const ConceptDag& a, const ConceptDag& b) {
  if (a.l_max != b.l_max || a.leaf_parent != b.leaf_parent) return false;
  if (a.nodes.size() != b.nodes.size()) return false;
  for (const auto& [id, na] : a.nodes) {
    auto it = b.nodes.find(id);
    if (it == b.nodes.end()) return false;
    const ConceptNode& nb = it->second;
    if (na.level != nb.level || na.concept_text != nb.concept_text ||
        na.generalized_caption != nb.generalized_caption || na.parents != nb.parents ||
        na.children != nb.children || na.leaf_ids != nb.leaf_ids ||
        na.hard_negatives != nb.hard_negatives) {
      return false;
    }
  }
  return true;
}

}  // namespace glass
