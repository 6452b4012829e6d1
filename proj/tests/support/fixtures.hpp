#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "glass/loss.hpp"
#include "glass/numerics.hpp"

namespace fixtures {

using glass::Embedding;
using glass::Group;
using glass::GroupBatch;

// Canonical seeded batch: unit embeddings drawn group by group, image before
// text within each pair. Fixture files are generated with exactly this order.
inline GroupBatch make_random_batch(std::size_t m, std::size_t n, std::size_t l,
                                    std::uint64_t seed) {
  glass::Rng rng(seed);
  GroupBatch batch;
  batch.groups.resize(m);
  for (std::size_t g = 0; g < m; ++g) {
    batch.groups[g].group_id = "g" + std::to_string(g);
    for (std::size_t i = 0; i < n; ++i) {
      batch.groups[g].images.push_back(rng.unit_vector(l));
      batch.groups[g].texts.push_back(rng.unit_vector(l));
    }
  }
  return batch;
}

struct Fixture {
  GroupBatch batch;
  std::string loss;
  std::uint64_t seed = 0;
  double tau = 0.1;
  double tau_inner = 0.1;
  double alpha = 0.7;
  double expected_value = 0.0;
};

inline Fixture load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  Fixture f;
  f.loss = j.at("loss").get<std::string>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.tau = j.at("tau").get<double>();
  f.tau_inner = j.at("tau_inner").get<double>();
  f.alpha = j.at("alpha").get<double>();
  f.expected_value = j.at("expected_value").get<double>();
  const std::size_t m = j.at("M").get<std::size_t>();
  const std::size_t n = j.at("N").get<std::size_t>();
  const std::size_t l = j.at("L").get<std::size_t>();
  const auto& images = j.at("images");
  const auto& texts = j.at("texts");
  f.batch.groups.resize(m);
  for (std::size_t g = 0; g < m; ++g) {
    f.batch.groups[g].group_id = "g" + std::to_string(g);
    for (std::size_t i = 0; i < n; ++i) {
      Embedding img(l), txt(l);
      for (std::size_t k = 0; k < l; ++k) {
        img[k] = images[g][i][k].get<double>();
        txt[k] = texts[g][i][k].get<double>();
      }
      f.batch.groups[g].images.push_back(img);
      f.batch.groups[g].texts.push_back(txt);
    }
  }
  return f;
}

inline std::string fixture_path(const std::string& name) {
  return std::string(GLASS_FIXTURE_DIR) + "/" + name;
}

}  // namespace fixtures
