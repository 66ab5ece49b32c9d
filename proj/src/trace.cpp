#include "stepctl/trace.hpp"

#include <fstream>

#include "stepctl/error.hpp"

namespace stepctl {

namespace {

nlohmann::json state_json(ThinkingState s) { return std::string(state_name(s)); }

ThinkingState state_from(const nlohmann::json& j) {
  const auto name = j.get<std::string>();
  const auto s = parse_state(name);
  if (!s) throw Error(Errc::MalformedInput, "unknown thinking state '" + name + "'");
  return *s;
}

nlohmann::json optional_string(const std::optional<std::string>& s) {
  return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

}  // namespace

std::size_t TraceDocument::thought_tokens() const noexcept {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.token_count;
  return n;
}

void to_json(nlohmann::json& j, const TokenMeta& tok) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& [text, lp] : tok.top_k) top.push_back(nlohmann::json::array({text, lp}));
  j = nlohmann::json{{"text", tok.text}, {"logprob", tok.logprob}, {"rank", tok.rank}, {"top_k", std::move(top)}};
}

void from_json(const nlohmann::json& j, TokenMeta& tok) {
  tok.text = j.at("text").get<std::string>();
  tok.logprob = j.at("logprob").get<double>();
  tok.rank = j.at("rank").get<int>();
  tok.top_k.clear();
  for (const auto& p : j.at("top_k")) tok.top_k.emplace_back(p.at(0).get<std::string>(), p.at(1).get<double>());
}

nlohmann::json trace_to_json(const TraceDocument& doc, const TraceWriteOptions& opts) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : doc.steps) {
    nlohmann::json js{{"index", s.index},
                      {"text", s.text},
                      {"token_count", s.token_count},
                      {"difficulty", s.difficulty},
                      {"state_before", state_json(s.state_before)},
                      {"state_after", state_json(s.state_after)},
                      {"think_end", s.think_end}};
    js["tag_injected"] =
        s.tag_injected ? nlohmann::json(std::string(render_tag(*s.tag_injected))) : nlohmann::json(nullptr);
    if (opts.include_tokens) js["tokens"] = s.tokens;
    if (opts.include_features) {
      js["features"] = {{"h_unc", s.features.h_unc}, {"h_sem", s.features.h_sem}};
    }
    steps.push_back(std::move(js));
  }

  nlohmann::json j{{"format_version", doc.format_version},
                   {"id", doc.id},
                   {"question", doc.question},
                   {"system_prompt", doc.system_prompt},
                   {"steps", std::move(steps)},
                   {"answer", optional_string(doc.answer)},
                   {"answer_text", doc.answer_text},
                   {"answer_tokens", doc.answer_tokens},
                   {"unattributed_tokens", doc.unattributed_tokens},
                   {"total_tokens", doc.total_tokens},
                   {"truncated", doc.truncated},
                   {"final_state", state_json(doc.final_state)},
                   {"config", controller_config_json(doc.config)},
                   {"backend", doc.backend},
                   {"embedding", doc.embedding},
                   {"estimator", doc.estimator},
                   {"controller_overhead_ms", doc.controller_overhead_ms},
                   {"error", optional_string(doc.error)}};
  return j;
}

TraceDocument trace_from_json(const nlohmann::json& j) {
  TraceDocument doc;
  try {
    doc.format_version = j.at("format_version").get<int>();
    if (doc.format_version != kTraceFormatVersion) {
      throw Error(Errc::UnsupportedVersion, "trace format_version " + std::to_string(doc.format_version));
    }
    doc.id = j.at("id").get<std::string>();
    doc.question = j.value("question", std::string{});
    doc.system_prompt = j.value("system_prompt", std::string{});
    for (const auto& js : j.at("steps")) {
      StepRecord s;
      s.index = js.at("index").get<std::size_t>();
      s.text = js.at("text").get<std::string>();
      s.token_count = js.at("token_count").get<std::size_t>();
      s.difficulty = js.at("difficulty").get<double>();
      s.state_before = state_from(js.at("state_before"));
      s.state_after = state_from(js.at("state_after"));
      s.think_end = js.value("think_end", false);
      if (js.contains("tag_injected") && !js.at("tag_injected").is_null()) {
        s.tag_injected = parse_tag(js.at("tag_injected").get<std::string>());
      }
      if (js.contains("tokens")) s.tokens = js.at("tokens").get<std::vector<TokenMeta>>();
      if (js.contains("features")) {
        const auto& f = js.at("features");
        const auto unc = f.at("h_unc").get<std::vector<double>>();
        if (unc.size() != kUncertaintyDim) throw Error(Errc::MalformedInput, "h_unc must have 11 entries");
        std::copy(unc.begin(), unc.end(), s.features.h_unc.begin());
        s.features.h_sem = f.at("h_sem").get<std::vector<double>>();
        s.features.z.assign(unc.begin(), unc.end());
        s.features.z.insert(s.features.z.end(), s.features.h_sem.begin(), s.features.h_sem.end());
      }
      doc.steps.push_back(std::move(s));
    }
    if (j.contains("answer") && !j.at("answer").is_null()) doc.answer = j.at("answer").get<std::string>();
    doc.answer_text = j.value("answer_text", std::string{});
    doc.answer_tokens = j.value("answer_tokens", std::size_t{0});
    doc.unattributed_tokens = j.value("unattributed_tokens", std::size_t{0});
    doc.total_tokens = j.at("total_tokens").get<std::size_t>();
    doc.truncated = j.at("truncated").get<bool>();
    doc.final_state = state_from(j.at("final_state"));
    if (j.contains("config")) {
      const auto& c = j.at("config");
      if (c.contains("fsm")) doc.config.fsm = c.at("fsm").get<FsmConfig>();
      if (c.contains("sampling")) doc.config.sampling = c.at("sampling").get<SamplingConfig>();
    }
    doc.backend = j.value("backend", std::string{});
    doc.embedding = j.value("embedding", std::string{});
    doc.estimator = j.value("estimator", std::string{});
    doc.controller_overhead_ms = j.value("controller_overhead_ms", std::vector<double>{});
    if (j.contains("error") && !j.at("error").is_null()) doc.error = j.at("error").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, std::string("trace: ") + e.what());
  }
  return doc;
}

std::vector<TraceDocument> read_traces(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MalformedInput, "cannot open trace file: " + path);
  std::vector<TraceDocument> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedInput, path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace stepctl
