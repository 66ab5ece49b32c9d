#include "stepctl/embedding.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stepctl/error.hpp"
#include "stepctl/features.hpp"

namespace stepctl {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> HashEmbedding::embed(std::string_view text) const {
  std::vector<double> v(kSemanticDim, 0.0);
  if (text.empty()) return v;

  constexpr std::size_t kGram = 3;
  const std::size_t n_grams = text.size() >= kGram ? text.size() - kGram + 1 : 1;
  for (std::size_t i = 0; i < n_grams; ++i) {
    std::uint64_t state = fnv1a(text.substr(i, kGram)) ^ seed_;
    for (double& x : v) {
      // top 53 bits -> [-1, 1)
      x += static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::string HashEmbedding::identity() const { return "hash-trigram:" + std::to_string(seed_); }

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::string token_env, int timeout_seconds)
    : url_(std::move(url)), timeout_seconds_(timeout_seconds) {
  if (!token_env.empty()) {
    if (const char* tok = std::getenv(token_env.c_str()); tok != nullptr && *tok != '\0') token_ = tok;
  }
}

std::vector<double> HttpEmbeddingProvider::embed(std::string_view text) const {
  const UrlParts parts = split_url(url_);
  // One client per call keeps the provider safe to share across sessions.
  httplib::Client client(parts.scheme_host_port);
  client.set_connection_timeout(timeout_seconds_);
  client.set_read_timeout(timeout_seconds_);
  if (token_) client.set_bearer_token_auth(*token_);

  const nlohmann::json body{{"text", std::string(text)}};
  auto res = client.Post(parts.path.empty() ? "/" : parts.path, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::ProviderFailure, "embedding request to " + url_ + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::ProviderFailure, "embedding endpoint returned HTTP " + std::to_string(res->status));
  }
  std::vector<double> out;
  try {
    out = nlohmann::json::parse(res->body).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ProviderFailure, std::string("malformed embedding response: ") + e.what());
  }
  if (out.size() != kSemanticDim) {
    throw Error(Errc::ProviderDimensionMismatch,
                "embedding endpoint returned " + std::to_string(out.size()) + " dims");
  }
  for (double x : out) {
    if (!std::isfinite(x)) throw Error(Errc::ProviderFailure, "embedding contains non-finite values");
  }
  return out;
}

}  // namespace stepctl
