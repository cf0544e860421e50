#pragma once

// Wire clients for remote providers.
//
//   chat / vqa : POST {base_url}/v1/chat/completions
//                {"model", "temperature", "messages": [{"role", "content"}]}
//                VQA sends a multipart user content with a base64 image part.
//                Reply text is choices[0].message.content.
//   embed      : POST {base_url}/v1/embed
//                {"model", "modality": "text"|"image", "inputs": [str],
//                 "image_b64"?, "augmentation"?: {"crop": [x0,y0,x1,y1], "hflip"}}
//                -> {"dim": int, "embeddings": [[float, ...], ...]}
//
// Embedding components travel as 32-bit floats and are widened to double.

#include <httplib.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfr/hashing.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/providers/retry.hpp"

namespace vfr::http {

struct Endpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path_prefix;       // e.g. "" or "/api"

  static Endpoint parse(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    require(scheme_end != std::string::npos, ErrorCode::InvalidConfig,
            "base_url needs a scheme: '" + base_url + "'");
    const auto path_start = base_url.find('/', scheme_end + 3);
    Endpoint e;
    if (path_start == std::string::npos) {
      e.scheme_host_port = base_url;
    } else {
      e.scheme_host_port = base_url.substr(0, path_start);
      e.path_prefix = base_url.substr(path_start);
      while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
    }
    return e;
  }
};

struct ClientOptions {
  std::string base_url;
  std::string model;
  std::string api_key;
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
};

/// POSTs JSON and returns the parsed body. Transport errors and 5xx are
/// retried per the policy; 4xx fails immediately with RequestRejected.
inline nlohmann::json post_json(const ClientOptions& opts, const std::string& path,
                                const nlohmann::json& body) {
  const Endpoint ep = Endpoint::parse(opts.base_url);
  const std::string payload = body.dump();
  return with_retry(opts.retry, [&]() -> nlohmann::json {
    httplib::Client client(ep.scheme_host_port);
    client.set_connection_timeout(opts.timeout);
    client.set_read_timeout(opts.timeout);
    httplib::Headers headers;
    if (!opts.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts.api_key);
    auto res = client.Post(ep.path_prefix + path, headers, payload, "application/json");
    if (!res) throw TransientFailure{"POST " + path + ": " + httplib::to_string(res.error())};
    if (res->status >= 500) {
      throw TransientFailure{"POST " + path + ": HTTP " + std::to_string(res->status)};
    }
    if (res->status >= 400 || res->status < 200) {
      throw Error(ErrorCode::RequestRejected,
                  "POST " + path + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::TransportError, "POST " + path + ": malformed JSON reply: " + e.what());
    }
  });
}

inline std::string completion_text(const nlohmann::json& reply) {
  const auto content = reply.value(nlohmann::json::json_pointer("/choices/0/message/content"), nlohmann::json());
  require(content.is_string(), ErrorCode::EmptyCompletion, "reply has no choices[0].message.content");
  std::string out = content.get<std::string>();
  require(!out.empty(), ErrorCode::EmptyCompletion, "provider returned empty completion");
  return out;
}

inline nlohmann::json chat_request(const std::string& model, double temperature,
                                   std::span<const ChatMessage> messages) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", model}, {"temperature", temperature}, {"messages", msgs}};
}

inline nlohmann::json vqa_request(const std::string& model, const std::string& image_bytes,
                                  const std::string& question) {
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", question}});
  content.push_back(
      {{"type", "image_url"},
       {"image_url", {{"url", "data:application/octet-stream;base64," + base64_encode(image_bytes)}}}});
  nlohmann::json msgs = nlohmann::json::array();
  msgs.push_back({{"role", "user"}, {"content", content}});
  return {{"model", model}, {"temperature", 0.0}, {"messages", msgs}};
}

inline std::vector<EmbeddingVector> parse_embed_reply(const nlohmann::json& reply,
                                                      std::size_t expected_count,
                                                      std::size_t expected_dim) {
  require(reply.contains("embeddings") && reply["embeddings"].is_array(), ErrorCode::TransportError,
          "embed reply lacks an embeddings array");
  if (reply.contains("dim")) {
    const auto dim = reply["dim"].get<std::size_t>();
    require(dim == expected_dim, ErrorCode::DimensionMismatch,
            "embed reply dim " + std::to_string(dim) + ", expected " + std::to_string(expected_dim));
  }
  std::vector<EmbeddingVector> out;
  for (const auto& row : reply["embeddings"]) {
    std::vector<double> v;
    v.reserve(row.size());
    for (const auto& x : row) v.push_back(static_cast<double>(x.get<float>()));
    require(v.size() == expected_dim, ErrorCode::DimensionMismatch,
            "embedding of width " + std::to_string(v.size()) + ", expected " +
                std::to_string(expected_dim));
    out.emplace_back(std::move(v));
  }
  check_embedding_dims(out, expected_count, expected_dim);
  return out;
}

class ChatClient final : public ChatProvider {
 public:
  explicit ChatClient(ClientOptions opts) : opts_(std::move(opts)) {}

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::Chat, opts_.base_url, opts_.model};
  }

  std::string chat(std::span<const ChatMessage> messages, double temperature) override {
    check_chat_preconditions(messages);
    return completion_text(
        post_json(opts_, "/v1/chat/completions", chat_request(opts_.model, temperature, messages)));
  }

 private:
  ClientOptions opts_;
};

class VqaClient final : public VqaProvider {
 public:
  explicit VqaClient(ClientOptions opts) : opts_(std::move(opts)) {}

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::Vqa, opts_.base_url, opts_.model};
  }

  std::string vqa(const ImageRef& image, const std::string& question) override {
    precondition(!question.empty(), "vqa question must be non-empty");
    const std::string bytes = read_image_bytes(image);
    return completion_text(
        post_json(opts_, "/v1/chat/completions", vqa_request(opts_.model, bytes, question)));
  }

 private:
  ClientOptions opts_;
};

class TextEmbedClient final : public TextEmbedder {
 public:
  TextEmbedClient(ClientOptions opts, std::size_t dim) : opts_(std::move(opts)), dim_(dim) {}

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::TextEmbed, opts_.base_url, opts_.model, dim_};
  }

  std::vector<EmbeddingVector> embed_text(std::span<const std::string> inputs) override {
    check_embed_text_preconditions(inputs);
    nlohmann::json body{{"model", opts_.model},
                        {"modality", "text"},
                        {"inputs", std::vector<std::string>(inputs.begin(), inputs.end())}};
    return parse_embed_reply(post_json(opts_, "/v1/embed", body), inputs.size(), dim_);
  }

 private:
  ClientOptions opts_;
  std::size_t dim_;
};

class ImageEmbedClient final : public ImageEmbedder {
 public:
  ImageEmbedClient(ClientOptions opts, std::size_t dim) : opts_(std::move(opts)), dim_(dim) {}

  ProviderFingerprint fingerprint() const override {
    return {ProviderKind::ImageEmbed, opts_.base_url, opts_.model, dim_};
  }

  EmbeddingVector embed_image(const ImageRef& image,
                              const std::optional<AugmentationParams>& aug) override {
    if (aug) aug->validate(0.0);
    nlohmann::json body{{"model", opts_.model},
                        {"modality", "image"},
                        {"inputs", nlohmann::json::array()},
                        {"image_b64", base64_encode(read_image_bytes(image))}};
    if (aug) {
      body["augmentation"] = {{"crop", {aug->x0, aug->y0, aug->x1, aug->y1}},
                              {"hflip", aug->horizontal_flip}};
    }
    return std::move(parse_embed_reply(post_json(opts_, "/v1/embed", body), 1, dim_).front());
  }

 private:
  ClientOptions opts_;
  std::size_t dim_;
};

}  // namespace vfr::http
