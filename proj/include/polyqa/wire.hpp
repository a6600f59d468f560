#pragma once

// JSON-over-HTTP protocol spoken with the model sidecar:
//   POST /encode   {"mode": "question"|"passage", "texts": [...]}
//                  -> {"dim": d, "vectors": [[...], ...]}
//   POST /generate {"prompts": [...], "max_tokens": n}
//                  -> {"outputs": [{"text": s, "token_logprobs": [...]}, ...]}
//   GET  /health   -> {"status": "ok", "dim": d}

#include <cmath>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "polyqa/error.hpp"

namespace polyqa::wire {

using json = nlohmann::json;

struct EncodeResponse {
  std::size_t dim = 0;
  std::vector<std::vector<float>> vectors;
};

struct GeneratedOutput {
  std::string text;
  std::vector<double> token_logprobs;
};

inline json make_encode_request(const std::string& mode, const std::vector<std::string>& texts) {
  return {{"mode", mode}, {"texts", texts}};
}

inline json make_generate_request(const std::vector<std::string>& prompts, int max_tokens) {
  return {{"prompts", prompts}, {"max_tokens", max_tokens}};
}

// Returns an empty string when `request` is a well-formed /encode body,
// otherwise a description of the first violation.
inline std::string check_encode_request(const json& request) {
  if (!request.is_object()) return "request is not an object";
  auto mode = request.find("mode");
  if (mode == request.end() || !mode->is_string()) return "missing string 'mode'";
  if (*mode != "question" && *mode != "passage") return "mode must be question or passage";
  auto texts = request.find("texts");
  if (texts == request.end() || !texts->is_array()) return "missing array 'texts'";
  for (const auto& t : *texts) {
    if (!t.is_string()) return "texts must be strings";
  }
  return {};
}

inline std::string check_generate_request(const json& request) {
  if (!request.is_object()) return "request is not an object";
  auto prompts = request.find("prompts");
  if (prompts == request.end() || !prompts->is_array()) return "missing array 'prompts'";
  for (const auto& p : *prompts) {
    if (!p.is_string()) return "prompts must be strings";
  }
  auto max_tokens = request.find("max_tokens");
  if (max_tokens == request.end() || !max_tokens->is_number_integer() || *max_tokens < 1) {
    return "max_tokens must be a positive integer";
  }
  return {};
}

inline EncodeResponse parse_encode_response(const json& response, std::size_t expected_count) {
  if (!response.is_object() || !response.contains("dim") || !response.contains("vectors")) {
    throw DataError("encode response missing 'dim' or 'vectors'");
  }
  if (!response["dim"].is_number_integer() || response["dim"].get<long long>() < 1) {
    throw DataError("encode response 'dim' must be a positive integer");
  }
  EncodeResponse out;
  out.dim = response["dim"].get<std::size_t>();
  const auto& vectors = response["vectors"];
  if (!vectors.is_array() || vectors.size() != expected_count) {
    throw DataError("encode response has " + std::to_string(vectors.size()) +
                    " vectors, expected " + std::to_string(expected_count));
  }
  for (const auto& v : vectors) {
    if (!v.is_array() || v.size() != out.dim) throw DataError("encode response vector length != dim");
    std::vector<float> values;
    values.reserve(out.dim);
    for (const auto& x : v) {
      if (!x.is_number()) throw DataError("encode response vector holds a non-number");
      const double d = x.get<double>();
      if (!std::isfinite(d)) throw DataError("encode response vector holds a non-finite value");
      values.push_back(static_cast<float>(d));
    }
    out.vectors.push_back(std::move(values));
  }
  return out;
}

// Returns the sidecar's embedding dim.
inline std::size_t parse_health_response(const json& response) {
  if (!response.is_object() || response.value("status", "") != "ok") throw DataError("health status is not ok");
  if (!response.contains("dim") || !response["dim"].is_number_integer() || response["dim"].get<long long>() < 1) {
    throw DataError("health response 'dim' must be a positive integer");
  }
  return response["dim"].get<std::size_t>();
}

inline std::vector<GeneratedOutput> parse_generate_response(const json& response,
                                                            std::size_t expected_count) {
  if (!response.is_object() || !response.contains("outputs") || !response["outputs"].is_array()) {
    throw DataError("generate response missing array 'outputs'");
  }
  const auto& outputs = response["outputs"];
  if (outputs.size() != expected_count) {
    throw DataError("generate response has " + std::to_string(outputs.size()) +
                    " outputs, expected " + std::to_string(expected_count));
  }
  std::vector<GeneratedOutput> out;
  for (const auto& o : outputs) {
    if (!o.is_object() || !o.contains("text") || !o["text"].is_string() ||
        !o.contains("token_logprobs") || !o["token_logprobs"].is_array()) {
      throw DataError("generate output needs 'text' and 'token_logprobs'");
    }
    GeneratedOutput g;
    g.text = o["text"].get<std::string>();
    for (const auto& lp : o["token_logprobs"]) {
      if (!lp.is_number()) throw DataError("token_logprobs holds a non-number");
      const double v = lp.get<double>();
      if (!(v <= 0.0)) throw DataError("token log-probability must be <= 0");
      g.token_logprobs.push_back(v);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Minimal JSON client over cpp-httplib. Every failure is a TransportError
// carrying the endpoint.
class HttpClient {
 public:
  explicit HttpClient(std::string endpoint, int timeout_seconds = 120)
      : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {
    if (endpoint_.empty()) throw UsageError("remote kind requires an endpoint URL");
  }

  const std::string& endpoint() const { return endpoint_; }

  json post(const std::string& path, const json& body) const {
    httplib::Client client(endpoint_);
    client.set_read_timeout(timeout_seconds_, 0);
    client.set_connection_timeout(10, 0);
    auto res = client.Post(path, body.dump(), "application/json");
    return decode(res, path);
  }

  std::size_t health() const {
    try {
      return parse_health_response(get("/health"));
    } catch (const DataError& e) {
      throw TransportError(endpoint_, std::string("/health: ") + e.what());
    }
  }

  json get(const std::string& path) const {
    httplib::Client client(endpoint_);
    client.set_connection_timeout(10, 0);
    auto res = client.Get(path);
    return decode(res, path);
  }

 private:
  json decode(const httplib::Result& res, const std::string& path) const {
    if (!res) {
      throw TransportError(endpoint_, path + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw TransportError(endpoint_, path + ": HTTP " + std::to_string(res->status) + " " +
                                          res->body.substr(0, 200));
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransportError(endpoint_, path + ": response is not JSON: " + e.what());
    }
  }

  std::string endpoint_;
  int timeout_seconds_;
};

}  // namespace polyqa::wire
