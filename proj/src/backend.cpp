#include "stepctl/backend.hpp"

#include <fstream>

#include "stepctl/embedding.hpp"
#include "stepctl/error.hpp"
#include "stepctl/synthetic.hpp"

namespace stepctl {

void from_json(const nlohmann::json& j, Script& script) {
  script = {};
  for (const auto& e : j.at("steps")) {
    ScriptEntry entry;
    entry.text = e.at("text").get<std::string>();
    entry.confidence = e.value("confidence", entry.confidence);
    if (e.contains("when") && !e.at("when").is_null()) {
      const auto lit = e.at("when").get<std::string>();
      entry.when = parse_tag(lit);
      if (!entry.when) throw Error(Errc::MalformedInput, "unknown control tag in script: " + lit);
    }
    script.steps.push_back(std::move(entry));
  }
  script.answer = j.value("answer", std::string{});
  script.answer_confidence = j.value("answer_confidence", script.answer_confidence);
}

void to_json(nlohmann::json& j, const Script& script) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& e : script.steps) {
    nlohmann::json entry{{"text", e.text}, {"confidence", e.confidence}};
    entry["when"] = e.when ? nlohmann::json(std::string(render_tag(*e.when))) : nlohmann::json(nullptr);
    steps.push_back(std::move(entry));
  }
  j = nlohmann::json{{"steps", std::move(steps)}, {"answer", script.answer},
                     {"answer_confidence", script.answer_confidence}};
}

std::optional<ControlTag> trailing_tag(const std::string& context) {
  const auto nl = context.rfind('\n');
  const std::string_view last =
      nl == std::string::npos ? std::string_view(context) : std::string_view(context).substr(nl + 1);
  return parse_tag(last);
}

ScriptedBackend::ScriptedBackend(Script script, std::uint64_t seed, int top_k)
    : script_(std::move(script)), seed_(seed), rng_(seed), top_k_(top_k) {}

std::string ScriptedBackend::identity() const { return "scripted:seed=" + std::to_string(seed_); }

bool ScriptedBackend::load_next_step(const std::string& context) {
  const auto tag = trailing_tag(context);
  while (cursor_ < script_.steps.size()) {
    const ScriptEntry& e = script_.steps[cursor_++];
    if (e.when && e.when != tag) continue;
    for (auto& word : split_words(e.text)) queue_.push_back(synthesize_token(std::move(word), e.confidence, top_k_, rng_));
    if (e.text.find(kThinkEndMarker) == std::string::npos) {
      queue_.push_back(synthesize_token("\n", e.confidence, top_k_, rng_));
    }
    return true;
  }
  return false;
}

GenerationChunk ScriptedBackend::generate(const std::string& context, const SamplingConfig& /*sampling*/,
                                          int max_tokens, StopMode mode) {
  GenerationChunk chunk;
  if (mode == StopMode::Newline) {
    if (queue_.empty() && !load_next_step(context)) {
      chunk.finish = FinishReason::EndOfSequence;
      return chunk;
    }
  } else if (!answer_loaded_) {
    answer_loaded_ = true;
    queue_.clear();
    for (auto& word : split_words(script_.answer)) {
      queue_.push_back(synthesize_token(std::move(word), script_.answer_confidence, top_k_, rng_));
    }
  }

  while (!queue_.empty()) {
    if (static_cast<int>(chunk.tokens.size()) >= max_tokens) {
      chunk.finish = FinishReason::Length;
      return chunk;
    }
    chunk.tokens.push_back(std::move(queue_.front()));
    queue_.pop_front();
    if (mode == StopMode::Newline && chunk.tokens.back().text.find('\n') != std::string::npos) break;
  }
  chunk.finish = mode == StopMode::Newline ? FinishReason::Newline : FinishReason::EndOfSequence;
  return chunk;
}

ScriptLibrary ScriptLibrary::from_json(const nlohmann::json& j) {
  ScriptLibrary lib;
  try {
    if (j.contains("steps")) {
      lib.by_id_["*"] = j.get<Script>();
    } else {
      for (const auto& [id, s] : j.at("scripts").items()) lib.by_id_[id] = s.get<Script>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, std::string("script file: ") + e.what());
  }
  return lib;
}

ScriptLibrary ScriptLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::BadManifest, "cannot open script file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, path + ": " + e.what());
  }
  return from_json(j);
}

const Script& ScriptLibrary::for_id(const std::string& id) const {
  if (auto it = by_id_.find(id); it != by_id_.end()) return it->second;
  if (auto it = by_id_.find("*"); it != by_id_.end()) return it->second;
  throw Error(Errc::BadManifest, "no script for question id '" + id + "' and no \"*\" fallback");
}

}  // namespace stepctl
