#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stepctl {

/// Maps step text to a kSemanticDim-dimensional vector. Implementations must
/// be deterministic and safe to call from several sessions at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
  virtual std::string identity() const = 0;
};

/// Seeded pseudo-random projection of the text's byte trigrams, L2-normalized.
/// Blank input maps to the zero vector.
class HashEmbedding final : public EmbeddingProvider {
 public:
  explicit HashEmbedding(std::uint64_t seed = 0x5eedULL) : seed_(seed) {}
  std::vector<double> embed(std::string_view text) const override;
  std::string identity() const override;

 private:
  std::uint64_t seed_;
};

/// POSTs {"text": ...} to `url` and expects {"embedding": [384 floats]}.
/// A bearer token is read from `token_env` at construction when set.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string url, std::string token_env = "STEPCTL_EMBED_TOKEN",
                                 int timeout_seconds = 30);
  std::vector<double> embed(std::string_view text) const override;
  std::string identity() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::optional<std::string> token_;
  int timeout_seconds_;
};

/// splitmix64 step; shared by the hash embedding and synthetic generators.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

struct UrlParts {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path;              // e.g. "/v1/embed", "" when absent
};

UrlParts split_url(const std::string& url);

}  // namespace stepctl
