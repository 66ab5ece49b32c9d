#include "stepctl/analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "stepctl/error.hpp"
#include "stepctl/stats.hpp"

namespace stepctl {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Pairs treated traces with baseline traces of the same id, in treated order.
std::vector<std::pair<const TraceDocument*, const TraceDocument*>> pair_by_id(
    std::span<const TraceDocument> baseline, std::span<const TraceDocument> treated) {
  std::map<std::string, const TraceDocument*> base;
  for (const auto& t : baseline) {
    if (!base.emplace(t.id, &t).second) throw Error(Errc::UnpairedSamples, "duplicate baseline id '" + t.id + "'");
  }
  if (base.size() != treated.size()) {
    throw Error(Errc::UnpairedSamples, std::to_string(baseline.size()) + " baseline traces vs " +
                                           std::to_string(treated.size()) + " treated traces");
  }
  std::vector<std::pair<const TraceDocument*, const TraceDocument*>> out;
  for (const auto& t : treated) {
    const auto it = base.find(t.id);
    if (it == base.end()) throw Error(Errc::UnpairedSamples, "no baseline trace for id '" + t.id + "'");
    out.emplace_back(it->second, &t);
  }
  return out;
}

std::size_t marked_tokens(std::span<const StepRecord> steps, const std::vector<bool>& marks) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (marks[i]) n += steps[i].token_count;
  }
  return n;
}

double positive_diff(double a, double b) { return std::max(0.0, a - b); }

}  // namespace

void to_json(nlohmann::json& j, const CueConfig& c) {
  j = nlohmann::json{{"reflection_cues", c.reflection_cues}, {"branching_cues", c.branching_cues},
                     {"window", c.window}};
}

void from_json(const nlohmann::json& j, CueConfig& c) {
  c.reflection_cues = j.value("reflection_cues", c.reflection_cues);
  c.branching_cues = j.value("branching_cues", c.branching_cues);
  c.window = j.value("window", c.window);
}

bool contains_cue(std::string_view text, std::span<const std::string> cues) {
  const std::string hay = lower(text);
  return std::any_of(cues.begin(), cues.end(),
                     [&](const std::string& cue) { return !cue.empty() && hay.find(lower(cue)) != std::string::npos; });
}

std::vector<bool> forward_window_marks(std::span<const StepRecord> steps, std::span<const std::string> cues,
                                       int window) {
  if (window < 0) throw Error(Errc::MalformedInput, "cue window must be >= 0");
  std::vector<bool> marks(steps.size(), false);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!contains_cue(steps[i].text, cues)) continue;
    const std::size_t last = std::min(steps.size() - 1, i + static_cast<std::size_t>(window));
    for (std::size_t k = i; k <= last; ++k) marks[k] = true;
  }
  return marks;
}

MarkedTrace mark_steps(std::span<const StepRecord> steps, const CueConfig& cues) {
  MarkedTrace m;
  m.reflect_marked = forward_window_marks(steps, cues.reflection_cues, cues.window);
  m.branch_marked = forward_window_marks(steps, cues.branching_cues, cues.window);
  m.reflect_steps = static_cast<std::size_t>(std::count(m.reflect_marked.begin(), m.reflect_marked.end(), true));
  m.branch_steps = static_cast<std::size_t>(std::count(m.branch_marked.begin(), m.branch_marked.end(), true));
  m.reflect_tokens = marked_tokens(steps, m.reflect_marked);
  m.branch_tokens = marked_tokens(steps, m.branch_marked);
  return m;
}

AttributionReport token_savings_attribution(std::span<const TraceDocument> baseline,
                                            std::span<const TraceDocument> treated, const CueConfig& cues) {
  AttributionReport report;
  report.window = cues.window;
  double total = 0.0, reflect = 0.0, branch = 0.0;
  for (const auto& [b, t] : pair_by_id(baseline, treated)) {
    const MarkedTrace mb = mark_steps(b->steps, cues);
    const MarkedTrace mt = mark_steps(t->steps, cues);
    SampleSavings s;
    s.id = t->id;
    s.total = positive_diff(static_cast<double>(b->thought_tokens()), static_cast<double>(t->thought_tokens()));
    s.reflect = positive_diff(static_cast<double>(mb.reflect_tokens), static_cast<double>(mt.reflect_tokens));
    s.branch = positive_diff(static_cast<double>(mb.branch_tokens), static_cast<double>(mt.branch_tokens));
    total += s.total;
    reflect += s.reflect;
    branch += s.branch;
    report.samples.push_back(std::move(s));
  }
  if (total > 0.0) {
    // Positive-only component savings can outrun the total on a sample that
    // shifted tokens between categories; ratios are capped at 1.
    report.reflect_ratio = std::min(1.0, reflect / total);
    report.branch_ratio = std::min(1.0, branch / total);
  }
  if (report.samples.size() >= 2) {
    std::vector<double> tot, ref, br;
    for (const auto& s : report.samples) {
      tot.push_back(s.total);
      ref.push_back(s.reflect);
      br.push_back(s.branch);
    }
    report.reflect_pearson = pearson(tot, ref);
    report.branch_pearson = pearson(tot, br);
  }
  return report;
}

std::map<ThinkingState, double> state_allocation(std::span<const TraceDocument> traces) {
  if (traces.empty()) throw Error(Errc::EmptyInput, "no traces to allocate");
  std::map<ThinkingState, double> counts{{ThinkingState::Normal, 0.0},
                                         {ThinkingState::Fast, 0.0},
                                         {ThinkingState::Slow, 0.0},
                                         {ThinkingState::Skip, 0.0}};
  double n = 0.0;
  for (const auto& t : traces) {
    for (const auto& s : t.steps) {
      if (auto it = counts.find(s.state_after); it != counts.end()) {
        it->second += 1.0;
        n += 1.0;
      }
    }
  }
  if (n > 0.0) {
    for (auto& [state, c] : counts) c /= n;
  }
  return counts;
}

GradeBook load_grades(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingGrades, "cannot open grades file: " + path);
  GradeBook out;
  try {
    nlohmann::json j;
    in >> j;
    for (const auto& [id, g] : j.items()) {
      out[id] = Grade{g.value("gold", std::string{}), g.at("correct").get<bool>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedInput, path + ": " + e.what());
  }
  return out;
}

void save_grades(const std::string& path, const GradeBook& grades) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, g] : grades) j[id] = {{"gold", g.gold}, {"correct", g.correct}};
  std::ofstream out(path);
  if (!out) throw Error(Errc::MalformedInput, "cannot write grades file: " + path);
  out << j.dump(2) << '\n';
}

std::size_t length_limit_failures(std::span<const TraceDocument> traces, const GradeBook& grades) {
  std::size_t n = 0;
  for (const auto& t : traces) {
    const auto it = grades.find(t.id);
    if (it == grades.end()) throw Error(Errc::MissingGrades, "no grade for trace '" + t.id + "'");
    if (t.truncated && !it->second.correct) ++n;
  }
  return n;
}

OutcomeSavings outcome_conditioned_savings(std::span<const TraceDocument> baseline,
                                           std::span<const TraceDocument> treated, const GradeBook& treated_grades) {
  OutcomeSavings out;
  double sum_correct = 0.0, sum_incorrect = 0.0;
  for (const auto& [b, t] : pair_by_id(baseline, treated)) {
    const auto it = treated_grades.find(t->id);
    if (it == treated_grades.end()) throw Error(Errc::MissingGrades, "no grade for trace '" + t->id + "'");
    const double base = static_cast<double>(b->total_tokens);
    const double saving = base > 0.0 ? (base - static_cast<double>(t->total_tokens)) / base : 0.0;
    if (it->second.correct) {
      sum_correct += saving;
      ++out.n_correct;
    } else {
      sum_incorrect += saving;
      ++out.n_incorrect;
    }
  }
  if (out.n_correct > 0) out.correct_saving_pct = 100.0 * sum_correct / static_cast<double>(out.n_correct);
  if (out.n_incorrect > 0) out.incorrect_saving_pct = 100.0 * sum_incorrect / static_cast<double>(out.n_incorrect);
  return out;
}

nlohmann::json attribution_json(const AttributionReport& r) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : r.samples) {
    samples.push_back({{"id", s.id}, {"total", s.total}, {"reflect", s.reflect}, {"branch", s.branch}});
  }
  return nlohmann::json{{"window", r.window},
                        {"reflect_ratio", r.reflect_ratio},
                        {"branch_ratio", r.branch_ratio},
                        {"reflect_pearson", r.reflect_pearson},
                        {"branch_pearson", r.branch_pearson},
                        {"samples", std::move(samples)}};
}

nlohmann::json allocation_json(const std::map<ThinkingState, double>& alloc) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [state, ratio] : alloc) j[std::string(state_name(state))] = ratio;
  return j;
}

nlohmann::json outcome_json(const OutcomeSavings& s) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return nlohmann::json{{"correct_saving_pct", opt(s.correct_saving_pct)},
                        {"incorrect_saving_pct", opt(s.incorrect_saving_pct)},
                        {"n_correct", s.n_correct},
                        {"n_incorrect", s.n_incorrect}};
}

}  // namespace stepctl
