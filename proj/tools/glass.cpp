// glass: grouped contrastive learning lab.
//
// Subcommands: synth, forge, train, pretrain-text, eval, compare, gradcheck,
// inspect. Every run writes a manifest.json (command, resolved config, seed,
// versions) beside its outputs; re-running from a manifest's config and seed
// reproduces the primary outputs byte for byte.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "glass/glass.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& outputs) {
  json j{{"command", command},
         {"config", config},
         {"seed", seed},
         {"outputs", outputs},
         {"versions",
          {{"app", glass::kAppVersion},
           {"dag_format", glass::kDagFormatVersion},
           {"checkpoint_format", glass::kCheckpointFormatVersion},
           {"report_format", glass::kReportFormatVersion}}}};
  std::ofstream out(out_dir / "manifest.json");
  glass::require(static_cast<bool>(out), glass::errc::io_failure,
                 "cannot write manifest in " + out_dir.string());
  out << j.dump(2) << "\n";
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  glass::require(static_cast<bool>(in), glass::errc::io_failure, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const std::exception& e) {
    glass::raise(glass::errc::io_failure, path + ": " + e.what());
  }
}

std::map<std::string, std::string> load_taxonomy_table(const std::string& path) {
  const json j = load_json_file(path);
  const json& table = j.contains("parent_of") ? j.at("parent_of") : j;
  std::map<std::string, std::string> out;
  for (auto it = table.begin(); it != table.end(); ++it) {
    out[it.key()] = it.value().get<std::string>();
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string spec_path;
  std::string out_dir;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& args) {
  const json spec_json = load_json_file(args.spec_path);
  glass::SynthSpec spec;
  spec.tier_branching = spec_json.value("tier_branching", spec.tier_branching);
  spec.leaves_per_group = spec_json.value("leaves_per_group", spec.leaves_per_group);
  spec.feature_dim = spec_json.value("feature_dim", spec.feature_dim);
  spec.noise_scale = spec_json.value("noise_scale", spec.noise_scale);

  glass::Rng rng(args.seed);
  glass::SynthResult synth = glass::synth_taxonomy(spec, rng);

  glass::ForgeConfig forge_cfg;
  forge_cfg.l_max = synth.l_max;
  forge_cfg.size_min = spec_json.value("size_min", forge_cfg.size_min);
  forge_cfg.sim_min = spec_json.value("sim_min", forge_cfg.sim_min);
  forge_cfg.hard_neg_threshold =
      spec_json.value("hard_neg_threshold", forge_cfg.hard_neg_threshold);
  forge_cfg.provider = std::make_shared<glass::RuleBasedProvider>(synth.parent_of);
  glass::ConceptDag dag = glass::forge(synth.corpus, forge_cfg);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  glass::save_corpus_jsonl(synth.corpus, (out / "corpus.jsonl").string());
  glass::serialize_dag(dag, (out / "dag.json").string());
  {
    json tax{{"kind", "glass.taxonomy"}, {"l_max", synth.l_max}, {"parent_of", synth.parent_of}};
    std::ofstream tf(out / "taxonomy.json");
    tf << tax.dump(2) << "\n";
  }
  json resolved = spec_json;
  resolved["spec_path"] = args.spec_path;
  write_manifest(out, "synth", resolved, args.seed,
                 {"corpus.jsonl", "dag.json", "taxonomy.json"});
  std::cout << "synth: " << synth.corpus.leaves.size() << " leaves, "
            << dag.group_ids().size() << " groups, l_max " << dag.l_max << " -> "
            << args.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// forge

struct ForgeArgs {
  std::string corpus_path;
  std::string out_dir;
  std::string provider = "rule";
  std::string taxonomy_path;
  std::string provider_url;
  std::string cache_dir;
  int l_max = 4;
  int size_min = 5;
  double sim_min = 0.9;
  double hard_neg_threshold = 0.85;
  int embed_buckets = 512;
  int embed_dim = 64;
  std::uint64_t embed_seed = 0x9e3779b9;
  int parallelism = 4;
  int timeout_seconds = 10;
  int max_retries = 2;
  std::uint64_t seed = 0;
};

int run_forge(const ForgeArgs& args) {
  glass::Corpus corpus = glass::load_corpus_jsonl(args.corpus_path);

  glass::ForgeConfig cfg;
  cfg.l_max = args.l_max;
  cfg.size_min = args.size_min;
  cfg.sim_min = args.sim_min;
  cfg.hard_neg_threshold = args.hard_neg_threshold;
  cfg.cache_dir = args.cache_dir;
  cfg.provider_parallelism = args.parallelism;
  cfg.embedder =
      std::make_shared<glass::TrigramEmbedder>(args.embed_buckets, args.embed_dim, args.embed_seed);
  if (args.provider == "rule") {
    glass::require(!args.taxonomy_path.empty(), glass::errc::invalid_argument,
                   "--taxonomy is required with the rule provider");
    cfg.provider =
        std::make_shared<glass::RuleBasedProvider>(load_taxonomy_table(args.taxonomy_path));
  } else if (args.provider == "http") {
    glass::HttpProviderConfig http;
    http.url = args.provider_url;
    glass::require(!http.url.empty(), glass::errc::invalid_argument,
                   "--provider-url or GLASS_PROVIDER_URL is required with the http provider");
    http.api_key = env_or("GLASS_PROVIDER_KEY", "");
    http.timeout_seconds = args.timeout_seconds;
    http.max_retries = args.max_retries;
    cfg.provider = std::make_shared<glass::HttpProvider>(http);
  } else {
    glass::raise(glass::errc::invalid_argument, "unknown provider '" + args.provider + "'");
  }

  glass::ConceptDag dag = glass::forge(corpus, cfg);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  glass::serialize_dag(dag, (out / "dag.json").string());
  json config{{"corpus", args.corpus_path},
              {"provider", args.provider},
              {"provider_url", args.provider_url},
              {"taxonomy", args.taxonomy_path},
              {"cache_dir", args.cache_dir},
              {"l_max", args.l_max},
              {"size_min", args.size_min},
              {"sim_min", args.sim_min},
              {"hard_neg_threshold", args.hard_neg_threshold},
              {"embed_buckets", args.embed_buckets},
              {"embed_dim", args.embed_dim},
              {"embed_seed", args.embed_seed},
              {"parallelism", args.parallelism}};
  write_manifest(out, "forge", config, args.seed, {"dag.json"});
  std::cout << "forge: " << dag.stats.total_pairs << " pairs";
  for (std::size_t i = 0; i < dag.stats.nodes_per_level.size(); ++i) {
    std::cout << ", l" << i + 1 << " nodes " << dag.stats.nodes_per_level[i];
  }
  std::cout << ", avg leaves/group " << dag.stats.avg_leaves_per_group << " -> " << args.out_dir
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / pretrain-text

struct TrainArgs {
  std::string data_dir;
  std::string corpus_path, dag_path;
  std::string out_dir;
  std::string loss = "pairwise";
  std::string preset = "toy";
  std::string config_path;
  std::string init_ckpt;
  std::string family = "pairwise";  // pretrain-text grouped family
  std::optional<int> epochs, groups, pairs, buckets, embed_dim, hidden;
  std::optional<double> lr, tau, tau_inner, alpha, split_fraction, momentum;
  bool stop_grad_centroids = false;
  std::uint64_t seed = 0;
};

glass::TrainConfig resolve_train_config(const TrainArgs& args, bool pretrain) {
  glass::TrainConfig cfg;
  if (args.preset == "toy") {
    cfg = glass::toy_preset();
  } else if (args.preset == "paper-table2") {
    cfg = glass::paper_table2_preset();
  } else {
    glass::raise(glass::errc::invalid_argument, "unknown preset '" + args.preset + "'");
  }
  if (!args.config_path.empty()) {
    cfg = glass::train_config_from_json(load_json_file(args.config_path));
  }
  cfg.loss_kind = pretrain ? glass::TrainLossKind::text_text
                           : glass::train_loss_from_name(args.loss);
  if (pretrain) cfg.text_text_uses_centroid = args.family == "centroid";
  if (args.epochs) cfg.epochs = *args.epochs;
  if (args.groups) cfg.groups_per_batch = *args.groups;
  if (args.pairs) cfg.pairs_per_group = *args.pairs;
  if (args.lr) cfg.learning_rate = *args.lr;
  if (args.tau) cfg.tau = *args.tau;
  if (args.tau_inner) cfg.tau_inner = *args.tau_inner;
  if (args.alpha) cfg.alpha = *args.alpha;
  if (args.split_fraction) cfg.split_fraction = *args.split_fraction;
  if (args.momentum) cfg.momentum = *args.momentum;
  if (args.buckets) cfg.dims.text_buckets = *args.buckets;
  if (args.embed_dim) cfg.dims.embed_dim = *args.embed_dim;
  if (args.hidden) cfg.dims.hidden = *args.hidden;
  if (args.stop_grad_centroids) cfg.stop_gradient_centroids = true;
  cfg.seed = args.seed;
  return cfg;
}

int run_train(const TrainArgs& args, bool pretrain) {
  const std::string corpus_path =
      !args.corpus_path.empty() ? args.corpus_path : args.data_dir + "/corpus.jsonl";
  const std::string dag_path = !args.dag_path.empty() ? args.dag_path : args.data_dir + "/dag.json";
  glass::Corpus corpus = glass::load_corpus_jsonl(corpus_path);
  glass::ConceptDag dag = glass::load_dag(dag_path);

  glass::TrainConfig cfg = resolve_train_config(args, pretrain);
  if (corpus.feature_dim() > 0) cfg.dims.image_dim = corpus.feature_dim();

  std::optional<glass::EncoderParams> init;
  if (!args.init_ckpt.empty()) init = glass::load_checkpoint(args.init_ckpt).params;

  glass::TrainResult result = glass::train(dag, corpus, cfg, init);

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  glass::Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.training_config_hash = glass::train_config_hash(cfg);
  ckpt.trainer_state = result.state;
  ckpt.train_config = cfg;
  glass::save_checkpoint(ckpt, (out / "checkpoint.json").string());
  glass::save_history_csv(result.history, (out / "history.csv").string());

  json config = glass::train_config_to_json(cfg);
  config["corpus"] = corpus_path;
  config["dag"] = dag_path;
  config["init"] = args.init_ckpt;
  write_manifest(out, pretrain ? "pretrain-text" : "train", config, cfg.seed,
                 {"checkpoint.json", "history.csv"});
  const double first = result.history.steps.empty() ? 0.0 : result.history.steps.front().loss;
  const double last = result.history.steps.empty() ? 0.0 : result.history.steps.back().loss;
  std::cout << (pretrain ? "pretrain-text" : "train") << ": "
            << glass::train_loss_name(cfg.loss_kind) << ", " << result.history.steps.size()
            << " steps, loss " << first << " -> " << last;
  if (result.history.hard_negative_fallbacks > 0) {
    std::cout << ", " << result.history.hard_negative_fallbacks
              << " batches fell back to uniform companions";
  }
  if (result.history.replacement_samples > 0) {
    std::cout << ", " << result.history.replacement_samples
              << " batches sampled pairs with replacement";
  }
  std::cout << " -> " << args.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt_path;
  std::string data_dir;
  std::string corpus_path, dag_path;
  std::string out_dir;
  std::string model_id = "model";
  std::string dataset_id;
  std::vector<std::string> attrs;
  bool restricted_gallery = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> split_fraction;
};

int run_eval(const EvalArgs& args) {
  const std::string corpus_path =
      !args.corpus_path.empty() ? args.corpus_path : args.data_dir + "/corpus.jsonl";
  const std::string dag_path = !args.dag_path.empty() ? args.dag_path : args.data_dir + "/dag.json";
  glass::Corpus corpus = glass::load_corpus_jsonl(corpus_path);
  glass::ConceptDag dag = glass::load_dag(dag_path);
  glass::Checkpoint ckpt = glass::load_checkpoint(args.ckpt_path);

  // The held-out set is rederived from the training split stream; seed and
  // fraction come from the checkpoint unless overridden.
  glass::require(ckpt.train_config.has_value() || args.seed.has_value(),
                 glass::errc::invalid_argument,
                 "checkpoint carries no train_config; pass --seed to rebuild the split");
  const std::uint64_t seed = args.seed ? *args.seed : ckpt.train_config->seed;
  const double fraction = args.split_fraction
                              ? *args.split_fraction
                              : (ckpt.train_config ? ckpt.train_config->split_fraction : 0.8);
  glass::Rng split_rng = glass::Rng(seed).derive("split");
  glass::DatasetSplit split = glass::split_dataset(dag, fraction, split_rng);

  glass::RecallOptions opts;
  opts.restricted_gallery = args.restricted_gallery;
  const std::string dataset_id =
      !args.dataset_id.empty() ? args.dataset_id : fs::path(dag_path).parent_path().string();
  glass::EvalReport report =
      glass::evaluate_all(ckpt.params, corpus, dag, split.test_leaves, args.model_id, dataset_id,
                          seed, ckpt.training_config_hash, opts);
  for (const std::string& kv : args.attrs) {
    const std::size_t eq = kv.find('=');
    glass::require(eq != std::string::npos, glass::errc::invalid_argument,
                   "--attr expects key=value, got '" + kv + "'");
    report.attributes[kv.substr(0, eq)] = kv.substr(eq + 1);
  }

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  glass::save_report(report, (out / "report.json").string(), (out / "report.csv").string());
  json config{{"ckpt", args.ckpt_path},
              {"corpus", corpus_path},
              {"dag", dag_path},
              {"model_id", args.model_id},
              {"dataset_id", dataset_id},
              {"restricted_gallery", args.restricted_gallery},
              {"split_fraction", fraction}};
  write_manifest(out, "eval", config, seed, {"report.json", "report.csv"});
  std::cout << "eval: " << args.model_id;
  for (const glass::LevelEntry& e : report.levels) {
    std::cout << " " << e.name << "=" << e.r_at_1;
  }
  std::cout << " -> " << args.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
  std::vector<std::string> report_paths;
  std::string out_dir;
  std::size_t baseline = 0;
};

int run_compare(const CompareArgs& args) {
  std::vector<glass::EvalReport> reports;
  for (const std::string& p : args.report_paths) reports.push_back(glass::load_report(p));
  glass::Comparison cmp = glass::compare_models(reports, args.baseline);
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  glass::save_comparison(cmp, (out / "comparison.csv").string(),
                         (out / "comparison.json").string());
  json config{{"reports", args.report_paths}, {"baseline", args.baseline}};
  write_manifest(out, "compare", config, 0, {"comparison.csv", "comparison.json"});
  std::cout << "compare: " << reports.size() << " reports, baseline "
            << cmp.model_ids[cmp.baseline_index] << " -> " << args.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string loss = "pairwise";
  int trials = 20;
  double h = 1e-5;
  std::uint64_t seed = 90210;
};

int run_gradcheck(const GradcheckArgs& args) {
  const glass::LossKind kind = glass::loss_kind_from_name(args.loss);
  glass::Rng rng(args.seed);
  double worst = 0.0;
  for (int t = 0; t < args.trials; ++t) {
    const std::size_t m = 2 + rng.next_below(3);
    const std::size_t n = 2 + rng.next_below(4);
    const std::size_t l = 2 + rng.next_below(15);
    glass::GroupBatch batch;
    batch.groups.resize(m);
    for (std::size_t g = 0; g < m; ++g) {
      batch.groups[g].group_id = "g" + std::to_string(g);
      for (std::size_t i = 0; i < n; ++i) {
        batch.groups[g].images.push_back(rng.unit_vector(l));
        batch.groups[g].texts.push_back(rng.unit_vector(l));
      }
    }
    glass::LossConfig cfg;
    const glass::LossOutput out = glass::loss_eval(kind, batch, cfg);
    const glass::FiniteDiffGrads fd = glass::finite_difference_grad(kind, batch, cfg, args.h);
    worst = std::max(worst, glass::max_grad_rel_error(out, fd));
  }
  std::cout << "gradcheck " << args.loss << ": max relative error " << worst << " over "
            << args.trials << " trials (h=" << args.h << ")\n";
  return worst < 1e-4 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// inspect

int run_inspect(const std::string& path) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl") {
    glass::Corpus corpus = glass::load_corpus_jsonl(path);
    std::cout << "corpus: " << corpus.leaves.size() << " leaves, feature dim "
              << corpus.feature_dim() << "\n";
    return 0;
  }
  const json j = load_json_file(path);
  const std::string kind = j.value("kind", "");
  if (kind == "glass.dag") {
    glass::ConceptDag dag = glass::load_dag(path);
    std::cout << "dag: l_max " << dag.l_max << ", " << dag.leaf_parent.size() << " leaves";
    for (int level = 1; level <= dag.l_max; ++level) {
      std::cout << ", l" << level << " nodes " << dag.ids_at_level(level).size();
    }
    std::cout << ", merges " << dag.merge_audit.size() << "\n";
  } else if (kind == "glass.checkpoint") {
    glass::Checkpoint ckpt = glass::load_checkpoint(path);
    std::cout << "checkpoint: B " << ckpt.params.dims.text_buckets << ", D "
              << ckpt.params.dims.image_dim << ", L " << ckpt.params.dims.embed_dim << ", hidden "
              << ckpt.params.dims.hidden << ", " << ckpt.params.total_size() << " parameters, "
              << "config hash " << ckpt.training_config_hash << "\n";
  } else if (kind == "glass.report") {
    glass::EvalReport report = glass::load_report(path);
    std::cout << "report: model " << report.model_id << ", dataset " << report.dataset_id;
    for (const glass::LevelEntry& e : report.levels) {
      std::cout << ", " << e.name << " " << e.r_at_1;
    }
    std::cout << "\n";
  } else if (j.contains("command")) {
    std::cout << "manifest: command " << j["command"].get<std::string>() << ", seed "
              << j.value("seed", 0ull) << "\n";
  } else {
    std::cout << "unrecognized file kind\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glass: grouped contrastive learning lab"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic grouped corpus + dag");
  synth_cmd->add_option("--spec", synth.spec_path, "synthesis spec (json)")->required();
  synth_cmd->add_option("--seed", synth.seed, "master seed");
  synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();

  ForgeArgs forge;
  forge.provider_url = env_or("GLASS_PROVIDER_URL", "");
  forge.cache_dir = env_or("GLASS_CACHE_DIR", "");
  CLI::App* forge_cmd = app.add_subcommand("forge", "build a concept dag from a caption corpus");
  forge_cmd->add_option("--corpus", forge.corpus_path, "corpus jsonl")->required();
  forge_cmd->add_option("--out", forge.out_dir, "output directory")->required();
  forge_cmd->add_option("--provider", forge.provider, "rule|http");
  forge_cmd->add_option("--taxonomy", forge.taxonomy_path, "taxonomy table json (rule provider)");
  forge_cmd->add_option("--provider-url", forge.provider_url,
                        "http provider endpoint (GLASS_PROVIDER_URL)");
  forge_cmd->add_option("--cache-dir", forge.cache_dir, "provider cache dir (GLASS_CACHE_DIR)");
  forge_cmd->add_option("--l-max", forge.l_max, "abstraction levels");
  forge_cmd->add_option("--size-min", forge.size_min, "minimum leaves per group");
  forge_cmd->add_option("--sim-min", forge.sim_min, "merge similarity threshold");
  forge_cmd->add_option("--hard-neg-threshold", forge.hard_neg_threshold,
                        "hard negative similarity threshold");
  forge_cmd->add_option("--embed-buckets", forge.embed_buckets, "concept embedder buckets");
  forge_cmd->add_option("--embed-dim", forge.embed_dim, "concept embedder dim");
  forge_cmd->add_option("--embed-seed", forge.embed_seed, "concept embedder seed");
  forge_cmd->add_option("--parallelism", forge.parallelism, "provider calls in flight");
  forge_cmd->add_option("--timeout", forge.timeout_seconds, "http timeout seconds");
  forge_cmd->add_option("--max-retries", forge.max_retries, "http retries");
  forge_cmd->add_option("--seed", forge.seed, "recorded in the manifest");

  auto add_train_options = [](CLI::App* cmd, TrainArgs& args) {
    cmd->add_option("--data", args.data_dir, "directory with corpus.jsonl and dag.json");
    cmd->add_option("--corpus", args.corpus_path, "corpus jsonl (overrides --data)");
    cmd->add_option("--dag", args.dag_path, "dag json (overrides --data)");
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--preset", args.preset, "toy|paper-table2");
    cmd->add_option("--config", args.config_path, "train config json (overrides preset)");
    cmd->add_option("--init", args.init_ckpt, "initial checkpoint");
    cmd->add_option("--epochs", args.epochs, "epochs");
    cmd->add_option("--groups", args.groups, "groups per batch");
    cmd->add_option("--pairs", args.pairs, "pairs per group");
    cmd->add_option("--lr", args.lr, "learning rate");
    cmd->add_option("--momentum", args.momentum, "momentum (default 0: plain descent)");
    cmd->add_option("--tau", args.tau, "outer temperature");
    cmd->add_option("--tau-inner", args.tau_inner, "inner temperature");
    cmd->add_option("--alpha", args.alpha, "inner/outer mix");
    cmd->add_option("--split-fraction", args.split_fraction, "train fraction");
    cmd->add_option("--buckets", args.buckets, "text feature buckets");
    cmd->add_option("--embed-dim", args.embed_dim, "embedding dim L");
    cmd->add_option("--hidden", args.hidden, "hidden layer width (0 = linear)");
    cmd->add_flag("--stop-grad-centroids", args.stop_grad_centroids,
                  "stop gradients at inner-loss centroids");
    cmd->add_option("--seed", args.seed, "master seed");
  };

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train the two-tower encoders");
  train_cmd->add_option("--loss", train.loss, "pairwise|centroid|infonce|text_text");
  add_train_options(train_cmd, train);

  TrainArgs pretrain;
  CLI::App* pretrain_cmd =
      app.add_subcommand("pretrain-text", "text-text alignment pretraining for the text tower");
  pretrain_cmd->add_option("--family", pretrain.family, "grouped loss family: pairwise|centroid");
  add_train_options(pretrain_cmd, pretrain);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "per-abstraction-level text->image R@1");
  eval_cmd->add_option("--ckpt", eval.ckpt_path, "checkpoint json")->required();
  eval_cmd->add_option("--data", eval.data_dir, "directory with corpus.jsonl and dag.json");
  eval_cmd->add_option("--corpus", eval.corpus_path, "corpus jsonl (overrides --data)");
  eval_cmd->add_option("--dag", eval.dag_path, "dag json (overrides --data)");
  eval_cmd->add_option("--out", eval.out_dir, "output directory")->required();
  eval_cmd->add_option("--model-id", eval.model_id, "model label for the report");
  eval_cmd->add_option("--dataset-id", eval.dataset_id, "dataset label for the report");
  eval_cmd->add_option("--attr", eval.attrs, "report attribute key=value (repeatable)");
  eval_cmd->add_flag("--restricted-gallery", eval.restricted_gallery,
                     "restrict each query's gallery to its group and hard negatives");
  eval_cmd->add_option("--seed", eval.seed, "split seed override");
  eval_cmd->add_option("--split-fraction", eval.split_fraction, "split fraction override");

  CompareArgs compare;
  CLI::App* compare_cmd = app.add_subcommand("compare", "per-level deltas and factor gains");
  compare_cmd->add_option("--report", compare.report_paths, "report json (repeatable)")
      ->required();
  compare_cmd->add_option("--baseline", compare.baseline, "baseline report index");
  compare_cmd->add_option("--out", compare.out_dir, "output directory")->required();

  GradcheckArgs gradcheck;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "analytic vs central-difference gradients");
  gradcheck_cmd->add_option("--loss", gradcheck.loss,
                            "pairwise_outer|pairwise_inner|pairwise|centroid_outer|"
                            "centroid_inner|centroid|infonce");
  gradcheck_cmd->add_option("--trials", gradcheck.trials, "seeded batches to check");
  gradcheck_cmd->add_option("--step", gradcheck.h, "central difference step");
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "batch seed");

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "summarize a glass artifact file");
  inspect_cmd->add_option("--file", inspect_path, "artifact path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exit 0 with help text
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (forge_cmd->parsed()) return run_forge(forge);
    if (train_cmd->parsed()) return run_train(train, false);
    if (pretrain_cmd->parsed()) return run_train(pretrain, true);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (compare_cmd->parsed()) return run_compare(compare);
    if (gradcheck_cmd->parsed()) return run_gradcheck(gradcheck);
    if (inspect_cmd->parsed()) return run_inspect(inspect_path);
  } catch (const glass::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
