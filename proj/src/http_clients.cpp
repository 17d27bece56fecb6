// HTTP clients for the four pluggable backends. All of them speak JSON over
// plain HTTP through cpp-httplib.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>

#include "fedit/federation.hpp"
#include "fedit/filtering.hpp"
#include "fedit/generation.hpp"
#include "fedit/retrieval.hpp"

namespace fedit {
namespace {

using nlohmann::json;

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_url(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  const auto path_start = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  Endpoint ep;
  ep.origin = base_url.substr(0, path_start);
  if (path_start != std::string::npos) ep.prefix = base_url.substr(path_start);
  while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  if (ep.origin.empty()) throw Error(ErrorCode::ConfigError, "empty backend URL");
  return ep;
}

httplib::Client make_client(const Endpoint& ep, std::chrono::seconds timeout) {
  httplib::Client client(ep.origin);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

/// One POST attempt.
json post_json(const std::string& base_url, const std::string& path, const json& body, const std::string& api_key,
               std::chrono::seconds timeout) {
  const auto ep = split_url(base_url);
  auto client = make_client(ep, timeout);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  auto res = client.Post(ep.prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::BackendUnreachable, base_url + path + ": " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) throw BackendError(res->status, res->body);
  try {
    return json::parse(res->body);
  } catch (const json::parse_error&) {
    throw BackendError(res->status, "response is not JSON: " + res->body.substr(0, 200));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ChatCompletionsBackend::ChatCompletionsBackend(std::string base_url, std::string model, std::string api_key,
                                               std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_(std::move(api_key)), timeout_(timeout) {}

std::string ChatCompletionsBackend::complete(const std::string& prompt, float temperature, int max_tokens,
                                             std::optional<std::uint64_t> seed) const {
  json body = {{"model", model_},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
               {"temperature", temperature},
               {"max_tokens", max_tokens}};
  if (seed) body["seed"] = *seed;
  const auto reply = post_json(base_url_, "/v1/chat/completions", body, api_key_, timeout_);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(200, std::string("unexpected completion shape: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

HttpRewardBackend::HttpRewardBackend(std::string base_url, std::string api_key, RetryPolicy retry,
                                     std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)), retry_(retry), timeout_(timeout) {}

std::vector<float> HttpRewardBackend::score(const std::vector<InstructionPair>& pairs) const {
  json rows = json::array();
  for (const auto& p : pairs) rows.push_back({{"instruction", p.instruction}, {"response", p.response}});
  const json body = {{"pairs", std::move(rows)}};
  const auto reply =
      with_retries(retry_, [&] { return post_json(base_url_, "/v1/score", body, api_key_, timeout_); });
  try {
    auto scores = reply.at("scores").get<std::vector<float>>();
    if (scores.size() != pairs.size()) {
      throw BackendError(200, "expected " + std::to_string(pairs.size()) + " scores, got " +
                                  std::to_string(scores.size()));
    }
    return scores;
  } catch (const json::exception& e) {
    throw BackendError(200, std::string("unexpected score response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, RetryPolicy retry, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), retry_(retry), timeout_(timeout) {}

EmbeddingMatrix HttpEmbeddingProvider::embed(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw Error(ErrorCode::EmptyTokenList, "nothing to embed");
  const json body = {{"tokens", tokens}};
  const auto reply = with_retries(retry_, [&] { return post_json(base_url_, "/v1/embed", body, "", timeout_); });
  EmbeddingMatrix m;
  try {
    const auto vectors = reply.at("vectors").get<std::vector<std::vector<float>>>();
    m.dim = reply.at("dim").get<std::size_t>();
    if (vectors.size() != tokens.size()) throw BackendError(200, "vector count does not match token count");
    m.rows = vectors.size();
    m.values.reserve(m.rows * m.dim);
    for (const auto& v : vectors) {
      if (v.size() != m.dim) throw BackendError(200, "vector length does not match dim");
      double norm = 0.0;
      for (float x : v) norm += static_cast<double>(x) * x;
      norm = std::sqrt(norm);
      if (!(norm > 0.0)) throw BackendError(200, "zero-length embedding vector");
      for (float x : v) m.values.push_back(static_cast<float>(x / norm));
    }
  } catch (const json::exception& e) {
    throw BackendError(200, std::string("unexpected embed response: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------

HttpTrainerBackend::HttpTrainerBackend(std::string base_url, RetryPolicy retry, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), retry_(retry), timeout_(timeout) {}

bool HttpTrainerBackend::healthy() const {
  const auto ep = split_url(base_url_);
  auto client = make_client(ep, std::chrono::seconds(10));
  auto res = client.Get(ep.prefix + "/v1/health");
  return res && res->status == 200;
}

TrainResult HttpTrainerBackend::train(std::size_t round, const std::string& client_id, const ParameterSet& params,
                                      const std::vector<InstructionPair>& dataset,
                                      const TrainHyperparams& hyper) const {
  const auto body = make_train_request(round, client_id, params, dataset, hyper);
  const auto reply = with_retries(retry_, [&] { return post_json(base_url_, "/v1/train", body, "", timeout_); });
  return parse_train_response(reply);
}

}  // namespace fedit
