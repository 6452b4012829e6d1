#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "glass/encoders.hpp"
#include "glass/error.hpp"

namespace glass {

// Infers a parent concept from texts and writes a generalized caption for a
// node. Rule-based and remote implementations share this surface.
class AbstractionProvider {
 public:
  virtual ~AbstractionProvider() = default;
  virtual std::string id() const = 0;
  virtual std::string abstract(const std::vector<std::string>& texts) = 0;
  virtual std::string generalize(const std::string& node_concept,
                                 const std::vector<std::string>& ancestor_concepts,
                                 const std::vector<std::string>& member_captions) = 0;
};

// Term -> parent-term table. Captions of the form "leaf:<key> ..." are keyed
// by <key>; any other text is looked up as a term directly.
class RuleBasedProvider : public AbstractionProvider {
 public:
  explicit RuleBasedProvider(std::map<std::string, std::string> parent_of)
      : parent_of_(std::move(parent_of)) {}

  std::string id() const override { return "rule"; }

  static std::string extract_term(const std::string& text) {
    const std::string norm = normalize_text(text);
    constexpr std::string_view kPrefix = "leaf:";
    if (norm.rfind(kPrefix, 0) == 0) {
      const std::size_t end = norm.find(' ', kPrefix.size());
      return norm.substr(kPrefix.size(), end == std::string::npos ? std::string::npos
                                                                  : end - kPrefix.size());
    }
    return norm;
  }

  std::string abstract(const std::vector<std::string>& texts) override {
    require(!texts.empty(), errc::provider_failure, "abstract called with no texts");
    const std::string term = extract_term(texts.front());
    auto it = parent_of_.find(term);
    require(it != parent_of_.end(), errc::provider_failure,
            "no parent concept for term '" + term + "'");
    return it->second;
  }

  std::string generalize(const std::string& node_concept,
                         const std::vector<std::string>& /*ancestor_concepts*/,
                         const std::vector<std::string>& /*member_captions*/) override {
    return "a scene of " + normalize_text(node_concept);
  }

 private:
  std::map<std::string, std::string> parent_of_;
};

struct HttpProviderConfig {
  std::string url;            // full endpoint, e.g. http://host:8080/provider
  std::string api_key;        // optional bearer token
  int timeout_seconds = 10;
  int max_retries = 2;        // retries after the first attempt
  int backoff_ms = 100;
};

// POSTs {task, inputs, context} and expects {"output": "..."}.
class HttpProvider : public AbstractionProvider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
    require(cfg_.url.rfind("https://", 0) != 0, errc::invalid_argument,
            "https provider endpoints are not supported in this build; use http");
    const std::size_t scheme = cfg_.url.find("://");
    require(scheme != std::string::npos, errc::invalid_argument,
            "provider url must include a scheme: " + cfg_.url);
    const std::size_t path = cfg_.url.find('/', scheme + 3);
    base_ = path == std::string::npos ? cfg_.url : cfg_.url.substr(0, path);
    path_ = path == std::string::npos ? "/" : cfg_.url.substr(path);
  }

  std::string id() const override { return "http:" + cfg_.url; }

  std::string abstract(const std::vector<std::string>& texts) override {
    return request("abstract", texts, {});
  }

  std::string generalize(const std::string& node_concept,
                         const std::vector<std::string>& ancestor_concepts,
                         const std::vector<std::string>& member_captions) override {
    std::vector<std::string> context;
    context.push_back(node_concept);
    context.insert(context.end(), ancestor_concepts.begin(), ancestor_concepts.end());
    return request("generalize", member_captions, context);
  }

 private:
  std::string request(const std::string& task, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& context) {
    nlohmann::json body{{"task", task}, {"inputs", inputs}, {"context", context}};
    const std::string payload = body.dump();
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms * attempt));
      }
      httplib::Client client(base_);
      client.set_connection_timeout(cfg_.timeout_seconds, 0);
      client.set_read_timeout(cfg_.timeout_seconds, 0);
      if (!cfg_.api_key.empty()) client.set_bearer_token_auth(cfg_.api_key);
      auto res = client.Post(path_, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      try {
        nlohmann::json reply = nlohmann::json::parse(res->body);
        return reply.at("output").get<std::string>();
      } catch (const std::exception& e) {
        last_error = std::string("bad response body: ") + e.what();
      }
    }
    raise(errc::provider_failure,
          task + " request to " + cfg_.url + " failed after " +
              std::to_string(cfg_.max_retries + 1) + " attempts (" + last_error + ")");
  }

  HttpProviderConfig cfg_;
  std::string base_;
  std::string path_;
};

// Memoizes provider calls, optionally persisting each entry as its own file
// so a failed run keeps everything answered so far.
class CachingProvider : public AbstractionProvider {
 public:
  CachingProvider(std::shared_ptr<AbstractionProvider> inner, std::string cache_dir = "")
      : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
    if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
  }

  std::string id() const override { return inner_->id(); }
  std::size_t underlying_calls() const { return underlying_calls_; }

  std::string abstract(const std::vector<std::string>& texts) override {
    return cached("abstract", texts, {}, [&] { return inner_->abstract(texts); });
  }

  std::string generalize(const std::string& node_concept,
                         const std::vector<std::string>& ancestor_concepts,
                         const std::vector<std::string>& member_captions) override {
    std::vector<std::string> context;
    context.push_back(node_concept);
    context.insert(context.end(), ancestor_concepts.begin(), ancestor_concepts.end());
    return cached("generalize", member_captions, context,
                  [&] { return inner_->generalize(node_concept, ancestor_concepts,
                                                  member_captions); });
  }

 private:
  static std::string join(const std::vector<std::string>& xs) {
    std::string out;
    for (const std::string& x : xs) {
      out += x;
      out += '\x1f';
    }
    return out;
  }

  template <typename Fn>
  std::string cached(const std::string& task, const std::vector<std::string>& inputs,
                     const std::vector<std::string>& context, Fn&& call) {
    const std::string key_material = inner_->id() + '\x1e' + task + '\x1e' + join(inputs) +
                                     '\x1e' + join(context);
    char key[17];
    std::snprintf(key, sizeof key, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(key_material)));

    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (auto it = memory_.find(key); it != memory_.end()) return it->second;
      if (!cache_dir_.empty()) {
        std::ifstream in(entry_path(key));
        if (in) {
          try {
            nlohmann::json j = nlohmann::json::parse(in);
            std::string out = j.at("output").get<std::string>();
            memory_[key] = out;
            return out;
          } catch (const std::exception&) {
            // unreadable entry: fall through and refetch
          }
        }
      }
      ++underlying_calls_;
    }

    // The underlying call runs unlocked; duplicate in-flight requests for the
    // same key store the same value.
    std::string out = call();
    std::lock_guard<std::mutex> lock(mutex_);
    memory_[key] = out;
    if (!cache_dir_.empty()) {
      nlohmann::json j{{"task", task}, {"inputs", inputs}, {"context", context}, {"output", out}};
      std::ofstream f(entry_path(key));
      f << j.dump();
    }
    return out;
  }

  std::string entry_path(const std::string& key) const { return cache_dir_ + "/" + key + ".json"; }

  std::shared_ptr<AbstractionProvider> inner_;
  std::string cache_dir_;
  std::mutex mutex_;
  std::map<std::string, std::string> memory_;
  std::size_t underlying_calls_ = 0;
};

}  // namespace glass
