#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>

#include "glass/forge.hpp"
#include "glass/provider.hpp"
#include "support/merge_oracle.hpp"

using namespace glass;

namespace {

// Test-only embedder with hand-picked vectors so merge/mine thresholds are
// exact by construction.
class FixedEmbedder : public TextEmbedder {
 public:
  explicit FixedEmbedder(std::map<std::string, Embedding> table) : table_(std::move(table)) {}
  std::string id() const override { return "fixed"; }
  Embedding embed(const std::string& text) override { return table_.at(normalize_text(text)); }

 private:
  std::map<std::string, Embedding> table_;
};

Embedding at_angle(double cosine) { return {cosine, std::sqrt(1.0 - cosine * cosine)}; }

// Chains map builder: n leaves all sharing one chain.
void add_group(std::map<int, std::vector<std::string>>& chains, int first_leaf, int count,
               const std::vector<std::string>& chain) {
  for (int i = 0; i < count; ++i) chains[first_leaf + i] = chain;
}

// Flat-view merge oracle shared with the acceptance suite.
std::map<std::string, std::set<int>> merge_oracle(std::map<std::string, std::set<int>> groups,
                                                  const std::map<std::string, Embedding>& emb,
                                                  int size_min, double sim_min) {
  return oracle::merge_groups(std::move(groups), emb, size_min, sim_min);
}

std::map<std::string, std::set<int>> dag_groups(const ConceptDag& dag) {
  std::map<std::string, std::set<int>> out;
  for (const std::string& id : dag.group_ids()) {
    const auto& xs = dag.nodes.at(id).leaf_ids;
    out[dag.nodes.at(id).concept_text] = std::set<int>(xs.begin(), xs.end());
  }
  return out;
}

}  // namespace

TEST_CASE("build_dag dedupes concepts and links levels") {
  std::map<int, std::vector<std::string>> chains;
  chains[0] = {"dog", "animal", "living thing"};
  chains[1] = {"dog", "animal", "living thing"};
  chains[2] = {"cat", "animal", "living thing"};
  chains[3] = {"oak", "tree", "living thing"};
  ConceptDag dag = build_dag(chains);
  dag.validate();

  CHECK(dag.l_max == 3);
  REQUIRE(dag.nodes.count("l1:dog") == 1);
  CHECK(dag.nodes.at("l1:dog").leaf_ids == std::vector<int>{0, 1});
  CHECK(dag.nodes.at("l1:cat").leaf_ids == std::vector<int>{2});
  CHECK(dag.nodes.at("l2:animal").leaf_ids == std::vector<int>{0, 1, 2});
  CHECK(dag.nodes.at("l3:living thing").leaf_ids == std::vector<int>{0, 1, 2, 3});
  CHECK(dag.nodes.at("l1:dog").parents == std::set<std::string>{"l2:animal"});
  CHECK(dag.nodes.at("l2:tree").parents == std::set<std::string>{"l3:living thing"});
  CHECK(dag.ids_at_level(1).size() == 3);
  CHECK(dag.ids_at_level(2).size() == 2);
  CHECK(dag.ids_at_level(3).size() == 1);

  // Partial sharing at the top only.
  CHECK(dag.ancestors_at_level(0, 3) == dag.ancestors_at_level(3, 3));
  CHECK(dag.ancestors_at_level(0, 1) != dag.ancestors_at_level(2, 1));

  std::map<int, std::vector<std::string>> ragged = chains;
  ragged[4] = {"x", "y"};
  CHECK_THROWS_MATCHES(build_dag(ragged), error,
                       Catch::Matchers::Predicate<error>([](const error& e) {
                         return e.code() == errc::inconsistent_chain_length;
                       }));
}

TEST_CASE("build_dag reconstructs the generator tree on a noiseless corpus") {
  SynthSpec spec;
  spec.tier_branching = {2, 2, 2, 2};
  spec.leaves_per_group = 4;  // 16 groups, 64 leaves
  spec.feature_dim = 8;
  spec.noise_scale = 0.0;
  Rng rng(606);
  SynthResult synth = synth_taxonomy(spec, rng);
  REQUIRE(synth.corpus.leaves.size() == 64);

  RuleBasedProvider provider(synth.parent_of);
  std::map<int, std::vector<std::string>> chains;
  for (const LeafRecord& leaf : synth.corpus.leaves) {
    chains[leaf.leaf_id] = infer_abstraction_chain(leaf.caption, synth.l_max, provider);
  }
  ConceptDag dag = build_dag(chains);
  dag.validate();

  // Same node set, levels, and edges as the generator tree.
  std::size_t concept_count = 0;
  for (const auto& [concept_text, level] : synth.concept_level) {
    ++concept_count;
    const std::string id = ConceptDag::node_id_for(level, concept_text);
    REQUIRE(dag.nodes.count(id) == 1);
    CHECK(dag.nodes.at(id).level == level);
    auto parent_it = synth.parent_of.find(concept_text);
    if (level < synth.l_max) {
      REQUIRE(parent_it != synth.parent_of.end());
      CHECK(dag.nodes.at(id).parents ==
            std::set<std::string>{ConceptDag::node_id_for(level + 1, parent_it->second)});
    } else {
      CHECK(dag.nodes.at(id).parents.empty());
    }
  }
  CHECK(dag.nodes.size() == concept_count);
  for (const auto& [group_concept, leaves] : synth.group_leaves) {
    CHECK(dag.nodes.at(ConceptDag::node_id_for(1, group_concept)).leaf_ids == leaves);
  }
}

TEST_CASE("merge joins an undersized node with a similar sibling") {
  std::map<int, std::vector<std::string>> chains;
  add_group(chains, 0, 2, {"small", "top"});
  add_group(chains, 10, 8, {"big", "top"});
  add_group(chains, 30, 7, {"far", "top"});
  ConceptDag dag = build_dag(chains);
  FixedEmbedder emb({{"small", at_angle(1.0)},
                     {"big", at_angle(0.95)},
                     {"far", {0.0, 1.0}},
                     {"top", {1.0, 0.0}}});
  merge_small_nodes(dag, 5, 0.9, emb);
  dag.validate();

  CHECK(dag.nodes.count("l1:small") == 0);
  REQUIRE(dag.nodes.count("l1:big") == 1);
  CHECK(dag.nodes.at("l1:big").leaf_count() == 10);  // grew by the 2 merged leaves
  CHECK(dag.leaf_parent.at(0) == "l1:big");
  REQUIRE(dag.merge_audit.size() == 1);
  CHECK(dag.merge_audit[0].merged_id == "l1:small");
  CHECK(dag.merge_audit[0].into_id == "l1:big");
  CHECK(dag.merge_audit[0].cosine >= 0.9);
}

TEST_CASE("merge removes an undersized node with no similar sibling") {
  std::map<int, std::vector<std::string>> chains;
  add_group(chains, 0, 2, {"small", "top"});
  add_group(chains, 10, 8, {"big", "top"});
  ConceptDag dag = build_dag(chains);
  FixedEmbedder emb({{"small", {1.0, 0.0}}, {"big", at_angle(0.5)}, {"top", {1.0, 0.0}}});
  merge_small_nodes(dag, 5, 0.9, emb);
  dag.validate();

  CHECK(dag.nodes.count("l1:small") == 0);
  CHECK(dag.leaf_parent.count(0) == 0);
  CHECK(dag.leaf_parent.count(1) == 0);
  CHECK(dag.nodes.at("l1:big").leaf_count() == 8);
  CHECK(dag.merge_audit.empty());
  CHECK(dag.stats.removed_groups == 1);
  CHECK(dag.stats.removed_leaves == 2);
}

TEST_CASE("merge removes emptied ancestors") {
  std::map<int, std::vector<std::string>> chains;
  add_group(chains, 0, 2, {"lonely", "dead branch"});
  add_group(chains, 10, 6, {"alive", "live branch"});
  ConceptDag dag = build_dag(chains);
  FixedEmbedder emb({{"lonely", {1.0, 0.0}},
                     {"alive", {0.0, 1.0}},
                     {"dead branch", {1.0, 0.0}},
                     {"live branch", {0.0, 1.0}}});
  merge_small_nodes(dag, 5, 0.9, emb);
  dag.validate();
  CHECK(dag.nodes.count("l2:dead branch") == 0);
  CHECK(dag.nodes.count("l2:live branch") == 1);
}

TEST_CASE("merge matches the brute-force re-implementation on seeded dags") {
  Rng rng(2222);
  for (int trial = 0; trial < 10; ++trial) {
    // 10 groups with random sizes 1..9 and random 3-dim concept embeddings.
    std::map<int, std::vector<std::string>> chains;
    std::map<std::string, Embedding> emb_table;
    std::map<std::string, std::set<int>> flat;
    int next_leaf = 0;
    for (int g = 0; g < 10; ++g) {
      const std::string name = "concept " + std::to_string(g);
      const int size = 1 + static_cast<int>(rng.next_below(9));
      add_group(chains, next_leaf, size, {name, "root"});
      std::set<int> leaves;
      for (int i = 0; i < size; ++i) leaves.insert(next_leaf + i);
      flat[name] = leaves;
      emb_table[name] = rng.unit_vector(3);
      next_leaf += size + 3;  // gaps make ids non-contiguous
    }
    emb_table["root"] = rng.unit_vector(3);

    const int size_min = 4;
    const double sim_min = 0.8;
    ConceptDag dag = build_dag(chains);
    FixedEmbedder emb(emb_table);
    merge_small_nodes(dag, size_min, sim_min, emb);
    dag.validate();

    const auto expected = merge_oracle(flat, emb_table, size_min, sim_min);
    CHECK(dag_groups(dag) == expected);
    for (const auto& [id, node] : dag.nodes) {
      if (node.level == 1) CHECK(node.leaf_count() >= size_min);
    }
    for (const MergeAuditEntry& e : dag.merge_audit) CHECK(e.cosine >= sim_min);
  }
}

TEST_CASE("generalize captions uses the documented template per group node") {
  std::map<int, std::vector<std::string>> chains;
  chains[0] = {"dog", "animal"};
  chains[1] = {"dog", "animal"};
  chains[2] = {"cat", "animal"};
  ConceptDag dag = build_dag(chains);
  Corpus corpus;
  corpus.leaves = {{0, "leaf:dog item 0", {}, {1.0}},
                   {1, "leaf:dog item 1", {}, {1.0}},
                   {2, "leaf:cat item 0", {}, {1.0}}};
  RuleBasedProvider provider({});
  generalize_captions(dag, corpus, provider);
  CHECK(dag.nodes.at("l1:dog").generalized_caption == "a scene of dog");
  CHECK(dag.nodes.at("l1:cat").generalized_caption == "a scene of cat");  // single member
  CHECK(!dag.nodes.at("l2:animal").generalized_caption.has_value());
}

TEST_CASE("hard negative mining matches the all-pairs scan") {
  std::map<int, std::vector<std::string>> chains;
  add_group(chains, 0, 5, {"alpha", "root"});
  add_group(chains, 10, 5, {"beta", "root"});
  add_group(chains, 20, 5, {"gamma", "root"});
  ConceptDag dag = build_dag(chains);
  FixedEmbedder emb({{"alpha", at_angle(1.0)},
                     {"beta", at_angle(0.9)},
                     {"gamma", {0.2, std::sqrt(1.0 - 0.04)}},
                     {"root", {1.0, 0.0}}});
  mine_hard_negatives(dag, 0.85, emb);
  dag.validate();
  CHECK(dag.nodes.at("l1:alpha").hard_negatives == std::set<std::string>{"l1:beta"});
  CHECK(dag.nodes.at("l1:beta").hard_negatives == std::set<std::string>{"l1:alpha"});
  CHECK(dag.nodes.at("l1:gamma").hard_negatives.empty());

  // Seeded corpus vs an O(n^2) scan with the real trigram embedder.
  Rng rng(31337);
  SynthSpec spec;
  spec.tier_branching = {4, 4};
  spec.leaves_per_group = 5;
  spec.feature_dim = 4;
  SynthResult synth = synth_taxonomy(spec, rng);
  RuleBasedProvider provider(synth.parent_of);
  std::map<int, std::vector<std::string>> synth_chains;
  for (const LeafRecord& leaf : synth.corpus.leaves) {
    synth_chains[leaf.leaf_id] = infer_abstraction_chain(leaf.caption, synth.l_max, provider);
  }
  ConceptDag sdag = build_dag(synth_chains);
  TrigramEmbedder trigram;
  const double threshold = 0.5;
  mine_hard_negatives(sdag, threshold, trigram);
  const auto groups = sdag.group_ids();
  for (const std::string& a : groups) {
    for (const std::string& b : groups) {
      if (a == b) continue;
      const bool expected = cosine_similarity(trigram.embed(sdag.nodes.at(a).concept_text),
                                              trigram.embed(sdag.nodes.at(b).concept_text)) >
                            threshold;
      CHECK(sdag.nodes.at(a).hard_negatives.count(b) == (expected ? 1u : 0u));
    }
  }
}

TEST_CASE("synth taxonomy counts and determinism") {
  SynthSpec spec;
  spec.tier_branching = {4, 2, 2};
  spec.leaves_per_group = 12;
  spec.feature_dim = 6;
  Rng rng(99);
  SynthResult a = synth_taxonomy(spec, rng);
  CHECK(a.l_max == 3);
  CHECK(a.group_leaves.size() == 16);  // 4*2*2
  CHECK(a.corpus.leaves.size() == 192);

  Rng rng2(99);
  SynthResult b = synth_taxonomy(spec, rng2);
  REQUIRE(b.corpus.leaves.size() == a.corpus.leaves.size());
  for (std::size_t i = 0; i < a.corpus.leaves.size(); ++i) {
    CHECK(a.corpus.leaves[i].caption == b.corpus.leaves[i].caption);
    CHECK(a.corpus.leaves[i].image_features == b.corpus.leaves[i].image_features);
  }

  SynthSpec noiseless = spec;
  noiseless.noise_scale = 0.0;
  Rng rng3(99);
  SynthResult c = synth_taxonomy(noiseless, rng3);
  for (const auto& [group, leaves] : c.group_leaves) {
    for (int leaf : leaves) {
      CHECK(c.corpus.by_id(leaf).image_features == c.corpus.by_id(leaves[0]).image_features);
    }
  }

  SynthSpec bad;
  bad.tier_branching = {};
  Rng rng4(1);
  CHECK_THROWS_MATCHES(synth_taxonomy(bad, rng4), error,
                       Catch::Matchers::Predicate<error>(
                           [](const error& e) { return e.code() == errc::invalid_spec; }));
}

TEST_CASE("forge runs the full pipeline on a synthetic corpus") {
  SynthSpec spec;
  spec.tier_branching = {2, 2, 2, 2};
  spec.leaves_per_group = 6;
  spec.feature_dim = 8;
  Rng rng(12121);
  SynthResult synth = synth_taxonomy(spec, rng);

  ForgeConfig cfg;
  cfg.l_max = synth.l_max;
  cfg.size_min = 5;
  cfg.sim_min = 0.9;
  cfg.hard_neg_threshold = 0.85;
  cfg.provider = std::make_shared<RuleBasedProvider>(synth.parent_of);
  ConceptDag dag = forge(synth.corpus, cfg);
  dag.validate();

  CHECK(dag.stats.total_pairs == 96);
  REQUIRE(dag.stats.nodes_per_level.size() == 4);
  CHECK(dag.stats.nodes_per_level[0] == 16);
  CHECK(dag.stats.nodes_per_level[3] == 2);
  CHECK(dag.stats.avg_leaves_per_group == Catch::Approx(6.0));
  for (const std::string& id : dag.group_ids()) {
    CHECK(dag.nodes.at(id).generalized_caption.has_value());
    CHECK(dag.nodes.at(id).leaf_count() >= cfg.size_min);
  }

  // Empty corpus: empty dag, zeroed stats.
  ConceptDag empty = forge(Corpus{}, cfg);
  CHECK(empty.nodes.empty());
  CHECK(empty.stats.total_pairs == 0);
  CHECK(empty.stats.avg_leaves_per_group == 0.0);
}

TEST_CASE("forge is deterministic given corpus, config, and seedless providers") {
  SynthSpec spec;
  spec.tier_branching = {2, 2};
  spec.leaves_per_group = 6;
  spec.feature_dim = 4;
  Rng rng(777);
  SynthResult synth = synth_taxonomy(spec, rng);
  ForgeConfig cfg;
  cfg.l_max = synth.l_max;
  cfg.size_min = 2;
  cfg.provider = std::make_shared<RuleBasedProvider>(synth.parent_of);
  ConceptDag a = forge(synth.corpus, cfg);
  ConceptDag b = forge(synth.corpus, cfg);
  CHECK(dag_structurally_equal(a, b));
}

TEST_CASE("dag serialization round trip and failure modes") {
  SynthSpec spec;
  spec.tier_branching = {2, 2};
  spec.leaves_per_group = 5;
  spec.feature_dim = 4;
  Rng rng(888);
  SynthResult synth = synth_taxonomy(spec, rng);
  ForgeConfig cfg;
  cfg.l_max = synth.l_max;
  cfg.size_min = 3;
  cfg.provider = std::make_shared<RuleBasedProvider>(synth.parent_of);
  ConceptDag dag = forge(synth.corpus, cfg);

  const auto dir = std::filesystem::temp_directory_path() / "glass_dag_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "dag.json").string();
  serialize_dag(dag, path);
  ConceptDag loaded = load_dag(path);
  CHECK(dag_structurally_equal(dag, loaded));
  loaded.validate();

  CHECK_THROWS_MATCHES(load_dag((dir / "missing.json").string()), error,
                       Catch::Matchers::Predicate<error>(
                           [](const error& e) { return e.code() == errc::io_failure; }));

  std::ofstream bad(dir / "corrupt.json");
  bad << "{ not json";
  bad.close();
  CHECK_THROWS_MATCHES(load_dag((dir / "corrupt.json").string()), error,
                       Catch::Matchers::Predicate<error>([](const error& e) {
                         return e.code() == errc::schema_version_mismatch;
                       }));

  std::ofstream wrong(dir / "wrong_version.json");
  wrong << R"({"format_version": 999, "kind": "glass.dag", "l_max": 1,
               "nodes": [], "edges": [], "hard_negatives": []})";
  wrong.close();
  CHECK_THROWS_MATCHES(load_dag((dir / "wrong_version.json").string()), error,
                       Catch::Matchers::Predicate<error>([](const error& e) {
                         return e.code() == errc::schema_version_mismatch;
                       }));
  std::filesystem::remove_all(dir);
}

TEST_CASE("golden dag file written at format version 1 reads back exactly") {
  ConceptDag dag = load_dag(std::string(GLASS_FIXTURE_DIR) + "/golden_dag_v1.json");
  dag.validate();
  CHECK(dag.l_max == 2);
  CHECK(dag.leaf_parent.size() == 24);
  CHECK(dag.group_ids() == std::vector<std::string>{"l1:kizo gusu", "l1:kizo nogo",
                                                    "l1:vupa rafu", "l1:vupa zodovu"});
  CHECK(dag.ids_at_level(2) == std::vector<std::string>{"l2:kizo", "l2:vupa"});
  CHECK(dag.leaf_parent.at(0) == "l1:kizo nogo");
  CHECK(dag.nodes.at("l1:kizo gusu").generalized_caption == "a scene of kizo gusu");
  CHECK(dag.nodes.at("l1:kizo gusu").hard_negatives == std::set<std::string>{"l1:kizo nogo"});
  CHECK(dag.nodes.at("l1:vupa rafu").hard_negatives == std::set<std::string>{"l1:vupa zodovu"});
  CHECK(dag.nodes.at("l2:kizo").leaf_ids.size() == 12);
  CHECK(dag.stats.total_pairs == 24);
  CHECK(dag.settings.hard_neg_threshold == 0.35);
  CHECK(dag.settings.provider_id == "rule");

  const auto dir = std::filesystem::temp_directory_path() / "glass_golden_rt";
  std::filesystem::create_directories(dir);
  serialize_dag(dag, (dir / "again.json").string());
  CHECK(dag_structurally_equal(dag, load_dag((dir / "again.json").string())));
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus jsonl round trip") {
  Corpus corpus;
  corpus.leaves = {{0, "leaf:a item 0", {"alt one"}, {1.0, 2.0}},
                   {1, "leaf:b item 0", {}, {3.0, 4.0}}};
  const auto dir = std::filesystem::temp_directory_path() / "glass_corpus_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "corpus.jsonl").string();
  save_corpus_jsonl(corpus, path);
  Corpus loaded = load_corpus_jsonl(path);
  REQUIRE(loaded.leaves.size() == 2);
  CHECK(loaded.leaves[0].caption == "leaf:a item 0");
  CHECK(loaded.leaves[0].alt_captions == std::vector<std::string>{"alt one"});
  CHECK(loaded.leaves[1].image_features == std::vector<double>{3.0, 4.0});
  CHECK_THROWS_AS(load_corpus_jsonl((dir / "nope.jsonl").string()), error);
  std::filesystem::remove_all(dir);
}
