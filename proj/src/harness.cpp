#include "stepctl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "stepctl/backend.hpp"
#include "stepctl/checkpoint.hpp"
#include "stepctl/embedding.hpp"
#include "stepctl/error.hpp"
#include "stepctl/orchestrator.hpp"
#include "stepctl/stats.hpp"

namespace stepctl {

namespace fs = std::filesystem;

namespace {

std::string strip_ws(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

void require_file(const std::string& path, std::string_view label) {
  std::error_code ec;
  if (path.empty()) throw Error(Errc::BadManifest, std::string(label) + " path is empty");
  if (!fs::is_regular_file(path, ec) || ec) {
    throw Error(Errc::BadManifest, std::string(label) + " not found: " + path);
  }
}

QuestionSummary summarize(const TraceDocument& t, const Question& q) {
  QuestionSummary s;
  s.id = t.id;
  s.total_tokens = t.total_tokens;
  s.steps = t.steps.size();
  for (const auto& st : t.steps) {
    switch (st.state_after) {
      case ThinkingState::Fast: ++s.fast; break;
      case ThinkingState::Normal: ++s.normal; break;
      case ThinkingState::Slow: ++s.slow; break;
      case ThinkingState::Skip: ++s.skip; break;
      default: break;
    }
  }
  s.answer = t.answer;
  s.gold = q.gold;
  s.correct = !t.error && answers_match(t.answer, q.gold);
  s.truncated = t.truncated;
  s.error = t.error;
  return s;
}

// Writes finished sessions in dataset order as soon as their predecessors are done.
class OrderedAppender {
 public:
  OrderedAppender(std::ostream& out, TraceWriteOptions opts) : out_(out), opts_(opts) {}

  void submit(std::size_t index, const TraceDocument& doc) {
    std::lock_guard lock(mu_);
    pending_[index] = trace_to_json(doc, opts_).dump();
    while (!pending_.empty() && pending_.begin()->first == next_) {
      out_ << pending_.begin()->second << '\n';
      pending_.erase(pending_.begin());
      ++next_;
    }
    out_.flush();
  }

 private:
  std::ostream& out_;
  TraceWriteOptions opts_;
  std::mutex mu_;
  std::map<std::size_t, std::string> pending_;
  std::size_t next_ = 0;
};

}  // namespace

std::vector<Question> load_dataset(const std::string& path) {
  require_file(path, "dataset");
  std::ifstream in(path);
  std::vector<Question> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Question q;
      q.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      q.question = j.at("question").get<std::string>();
      q.gold = j.value("gold", std::string{});
      out.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedInput, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

bool answers_match(const std::optional<std::string>& predicted, const std::string& gold) {
  return predicted.has_value() && strip_ws(*predicted) == strip_ws(gold);
}

void validate_manifest(const RunManifest& m) {
  require_file(m.dataset_path, "dataset");
  if (m.backend == BackendKind::Scripted) require_file(m.script_path, "script");
  if (m.backend == BackendKind::OpenAi && m.openai.base_url.empty()) {
    throw Error(Errc::BadManifest, "openai backend needs a base URL");
  }
  if (m.pilot_checkpoint) require_file(*m.pilot_checkpoint, "pilot checkpoint");
  if (m.output_path.empty()) throw Error(Errc::BadManifest, "output trace path is empty");
  const fs::path parent = fs::path(m.output_path).parent_path();
  std::error_code ec;
  if (!parent.empty() && !fs::is_directory(parent, ec)) {
    throw Error(Errc::BadManifest, "output directory does not exist: " + parent.string());
  }
  if (m.parallel < 1) throw Error(Errc::BadManifest, "--parallel must be >= 1");
  if (m.constant_difficulty && !(*m.constant_difficulty >= 0.0 && *m.constant_difficulty <= 1.0)) {
    throw Error(Errc::BadManifest, "constant difficulty must lie in [0,1]");
  }
  validate_config(m.config.fsm);
  validate_config(m.config.sampling);
}

double RunSummary::accuracy() const noexcept {
  return rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rows.size());
}

RunSummary cmd_run(const RunManifest& m) {
  validate_manifest(m);
  const auto questions = load_dataset(m.dataset_path);

  std::optional<ScriptLibrary> scripts;
  if (m.backend == BackendKind::Scripted) scripts = ScriptLibrary::load(m.script_path);

  std::optional<PilotModel> pilot;
  std::unique_ptr<DifficultyEstimator> estimator;
  if (m.constant_difficulty) {
    estimator = std::make_unique<ConstantDifficulty>(*m.constant_difficulty);
  } else {
    pilot = m.pilot_checkpoint ? load_checkpoint_file(*m.pilot_checkpoint)
                               : PilotModel::initialized(m.pilot_hidden_dim, m.seed);
    estimator = std::make_unique<PilotEstimator>(
        *pilot, m.pilot_checkpoint ? "pilot:" + *m.pilot_checkpoint : "pilot:untrained-seed=" + std::to_string(m.seed));
  }

  std::unique_ptr<EmbeddingProvider> embedding;
  if (m.embedding_url) {
    embedding = std::make_unique<HttpEmbeddingProvider>(*m.embedding_url);
  } else {
    embedding = std::make_unique<HashEmbedding>(m.seed);
  }

  std::ofstream out(m.output_path, m.append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(Errc::BadManifest, "cannot open output trace file: " + m.output_path);
  OrderedAppender appender(out, TraceWriteOptions{});

  std::vector<TraceDocument> traces(questions.size());
  std::atomic<std::size_t> next{0};
  SessionOptions opts{m.record_timing};

  auto worker = [&] {
    for (std::size_t i = next++; i < questions.size(); i = next++) {
      const Question& q = questions[i];
      std::unique_ptr<GenerationBackend> backend;
      if (m.backend == BackendKind::Scripted) {
        backend = std::make_unique<ScriptedBackend>(scripts->for_id(q.id), m.seed ^ fnv1a(q.id),
                                                    m.config.sampling.top_k_logprobs);
      } else {
        backend = std::make_unique<OpenAiCompletionsBackend>(m.openai);
      }
      try {
        traces[i] = run_session(q.id, q.question, *backend, *estimator, *embedding, m.config, opts);
      } catch (const SessionError& e) {
        traces[i] = e.partial();
        traces[i].error = e.what();
      }
      appender.submit(i, traces[i]);
    }
  };

  const int n_threads = std::min<int>(m.parallel, static_cast<int>(std::max<std::size_t>(questions.size(), 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  RunSummary summary;
  GradeBook grades;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    QuestionSummary s = summarize(traces[i], questions[i]);
    if (s.correct) ++summary.correct;
    if (s.error) ++summary.backend_failures;
    grades[s.id] = Grade{s.gold, s.correct};
    summary.rows.push_back(std::move(s));
  }
  if (m.grades_output_path) save_grades(*m.grades_output_path, grades);
  return summary;
}

std::string format_run_summary(const RunSummary& summary) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "id" << std::right << std::setw(8) << "tokens" << std::setw(7) << "steps"
     << std::setw(6) << "FAST" << std::setw(8) << "NORMAL" << std::setw(6) << "SLOW" << std::setw(6) << "SKIP"
     << "  " << std::left << std::setw(16) << "answer" << std::setw(12) << "gold" << "result\n";
  for (const auto& r : summary.rows) {
    std::string result = r.correct ? "correct" : "wrong";
    if (r.truncated) result += " (truncated)";
    if (r.error) result = "error: " + *r.error;
    os << std::left << std::setw(16) << r.id << std::right << std::setw(8) << r.total_tokens << std::setw(7)
       << r.steps << std::setw(6) << r.fast << std::setw(8) << r.normal << std::setw(6) << r.slow << std::setw(6)
       << r.skip << "  " << std::left << std::setw(16) << r.answer.value_or("-") << std::setw(12) << r.gold
       << result << '\n';
  }
  os << "accuracy: " << summary.correct << "/" << summary.rows.size() << " (" << std::fixed << std::setprecision(1)
     << 100.0 * summary.accuracy() << "%)\n";
  return os.str();
}

std::vector<TrainSample> load_train_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MalformedInput, "cannot open training data: " + path);
  std::vector<TrainSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      const auto z = j.at("z").get<std::vector<std::vector<double>>>();
      auto targets = j.at("targets").get<std::vector<double>>();
      if (z.size() != targets.size()) throw Error(Errc::MalformedInput, where + ": z and targets differ in length");
      TrainSample s;
      const auto dim = z.empty() ? static_cast<Eigen::Index>(kFeatureDim) : static_cast<Eigen::Index>(z[0].size());
      s.inputs.resize(dim, static_cast<Eigen::Index>(z.size()));
      for (std::size_t t = 0; t < z.size(); ++t) {
        if (static_cast<Eigen::Index>(z[t].size()) != dim) {
          throw Error(Errc::MalformedInput, where + ": ragged feature rows");
        }
        s.inputs.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const Eigen::VectorXd>(z[t].data(), dim);
      }
      for (double v : targets) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::MalformedInput, where + ": target outside [0,1]");
      }
      s.targets = std::move(targets);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedInput, where + ": " + e.what());
    }
  }
  return out;
}

void write_train_samples(const std::string& path, const std::vector<SyntheticTrajectory>& data) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::MalformedInput, "cannot write training data: " + path);
  for (const auto& t : data) {
    nlohmann::json z = nlohmann::json::array();
    for (const auto& s : t.steps) z.push_back(s.z);
    out << nlohmann::json{{"id", t.id}, {"z", std::move(z)}, {"targets", t.targets}}.dump() << '\n';
  }
}

std::pair<double, double> evaluate_fidelity(const PilotModel& model, std::span<const TrainSample> samples) {
  std::vector<double> pred, target;
  for (const auto& s : samples) {
    const auto v = model.forward(s.inputs);
    pred.insert(pred.end(), v.begin(), v.end());
    target.insert(target.end(), s.targets.begin(), s.targets.end());
  }
  return {pearson(pred, target), spearman(pred, target)};
}

TrainCommandResult cmd_train_pilot(const TrainCommand& cmd) {
  validate_train_config(cmd.train);
  if (!(cmd.holdout_fraction >= 0.0 && cmd.holdout_fraction < 1.0)) {
    throw Error(Errc::InvalidTrainConfig, "holdout fraction must lie in [0,1)");
  }
  auto samples = load_train_samples(cmd.data_path);
  if (samples.empty()) throw Error(Errc::EmptyDataset, "no training samples in " + cmd.data_path);

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(cmd.train.seed ^ 0x5eed117ULL);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  auto n_hold = static_cast<std::size_t>(cmd.holdout_fraction * static_cast<double>(samples.size()));
  if (n_hold >= samples.size()) n_hold = samples.size() - 1;

  std::vector<TrainSample> train_set, hold_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_hold ? train_set : hold_set).push_back(std::move(samples[order[i]]));
  }

  const int input_dim = static_cast<int>(train_set.front().inputs.rows());
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(PilotModel::initialized(cmd.hidden_dim, cmd.train.seed, input_dim), train_set, cmd.train);
  const auto t1 = std::chrono::steady_clock::now();

  TrainCommandResult out;
  out.loss_history = result.loss_history;
  out.n_train = train_set.size();
  out.n_holdout = hold_set.size();
  out.seconds = std::chrono::duration<double>(t1 - t0).count();
  if (hold_set.size() >= 1) {
    const auto [p, s] = evaluate_fidelity(result.model, hold_set);
    out.holdout_pearson = p;
    out.holdout_spearman = s;
  }

  save_checkpoint_file(cmd.checkpoint_path, result.model, TrainingMetadata{cmd.train.seed, result.loss_history});
  if (cmd.loss_curve_path) {
    std::ofstream lc(*cmd.loss_curve_path);
    if (!lc) throw Error(Errc::MalformedInput, "cannot write loss curve: " + *cmd.loss_curve_path);
    lc << "epoch,loss\n";
    lc << std::setprecision(17);
    for (std::size_t e = 0; e < result.loss_history.size(); ++e) lc << e + 1 << ',' << result.loss_history[e] << '\n';
  }
  return out;
}

nlohmann::json analyze_traces(std::span<const TraceDocument> baseline, std::span<const TraceDocument> treated,
                              const GradeBook& grades, const GradeBook* baseline_grades, const CueConfig& cues) {
  nlohmann::json report;
  report["format_version"] = 1;
  report["cues"] = cues;
  report["attribution"] = attribution_json(token_savings_attribution(baseline, treated, cues));

  nlohmann::json sweep = nlohmann::json::array();
  for (int w = 0; w <= 2; ++w) {
    CueConfig c = cues;
    c.window = w;
    auto a = attribution_json(token_savings_attribution(baseline, treated, c));
    a.erase("samples");
    sweep.push_back(std::move(a));
  }
  report["attribution_by_window"] = std::move(sweep);

  auto process = [&](std::span<const TraceDocument> traces) {
    double reflect = 0.0, branch = 0.0;
    for (const auto& t : traces) {
      const auto m = mark_steps(t.steps, cues);
      reflect += static_cast<double>(m.reflect_steps);
      branch += static_cast<double>(m.branch_steps);
    }
    const double n = std::max<double>(1.0, static_cast<double>(traces.size()));
    return nlohmann::json{{"avg_reflect_steps", reflect / n}, {"avg_branch_steps", branch / n}};
  };
  report["process"] = {{"baseline", process(baseline)}, {"treated", process(treated)}};
  report["state_allocation"] = {{"baseline", allocation_json(state_allocation(baseline))},
                                {"treated", allocation_json(state_allocation(treated))}};

  nlohmann::json failures{{"treated", length_limit_failures(treated, grades)}};
  failures["baseline"] =
      baseline_grades ? nlohmann::json(length_limit_failures(baseline, *baseline_grades)) : nlohmann::json(nullptr);
  report["length_limit_failures"] = std::move(failures);
  report["outcome_conditioned_savings"] = outcome_json(outcome_conditioned_savings(baseline, treated, grades));
  return report;
}

nlohmann::json cmd_analyze(const AnalyzeCommand& cmd) {
  std::error_code ec;
  if (cmd.grades_path.empty() || !fs::is_regular_file(cmd.grades_path, ec)) {
    throw Error(Errc::MissingGrades, "grades file not found: " + cmd.grades_path);
  }
  if (cmd.baseline_grades_path && !fs::is_regular_file(*cmd.baseline_grades_path, ec)) {
    throw Error(Errc::MissingGrades, "baseline grades file not found: " + *cmd.baseline_grades_path);
  }
  const auto baseline = read_traces(cmd.baseline_path);
  const auto treated = read_traces(cmd.treated_path);
  const auto grades = load_grades(cmd.grades_path);
  std::optional<GradeBook> base_grades;
  if (cmd.baseline_grades_path) base_grades = load_grades(*cmd.baseline_grades_path);
  return analyze_traces(baseline, treated, grades, base_grades ? &*base_grades : nullptr, cmd.cues);
}

std::string format_analysis_table(const nlohmann::json& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  auto num = [](const nlohmann::json& v) { return v.is_null() ? std::string("n/a") : v.dump(); };
  auto pct = [](const nlohmann::json& v) { return v.is_null() ? std::string("n/a") : v.dump() + "%"; };

  os << "token-savings attribution\n";
  os << std::left << std::setw(8) << "W" << std::right << std::setw(14) << "reflect_ratio" << std::setw(14)
     << "branch_ratio" << std::setw(16) << "reflect_pearson" << std::setw(16) << "branch_pearson" << '\n';
  for (const auto& a : r.at("attribution_by_window")) {
    os << std::left << std::setw(8) << a.at("window").get<int>() << std::right << std::setw(14)
       << a.at("reflect_ratio").get<double>() << std::setw(14) << a.at("branch_ratio").get<double>()
       << std::setw(16) << a.at("reflect_pearson").get<double>() << std::setw(16)
       << a.at("branch_pearson").get<double>() << '\n';
  }

  os << "\nstate allocation\n";
  os << std::left << std::setw(10) << "run" << std::right;
  for (const char* s : {"NORMAL", "FAST", "SLOW", "SKIP"}) os << std::setw(10) << s;
  os << '\n';
  for (const char* run : {"baseline", "treated"}) {
    os << std::left << std::setw(10) << run << std::right;
    for (const char* s : {"NORMAL", "FAST", "SLOW", "SKIP"}) {
      os << std::setw(10) << r.at("state_allocation").at(run).at(s).get<double>();
    }
    os << '\n';
  }

  const auto& p = r.at("process");
  os << "\nprocess        avg_reflect_steps  avg_branch_steps\n";
  for (const char* run : {"baseline", "treated"}) {
    os << std::left << std::setw(15) << run << std::right << std::setw(17)
       << p.at(run).at("avg_reflect_steps").get<double>() << std::setw(18)
       << p.at(run).at("avg_branch_steps").get<double>() << '\n';
  }

  const auto& f = r.at("length_limit_failures");
  os << "\nlength-limit failures: treated " << num(f.at("treated")) << ", baseline " << num(f.at("baseline")) << '\n';
  const auto& o = r.at("outcome_conditioned_savings");
  os << "saving on correct: " << pct(o.at("correct_saving_pct")) << " (n=" << o.at("n_correct").get<int>()
     << "), on incorrect: " << pct(o.at("incorrect_saving_pct")) << " (n=" << o.at("n_incorrect").get<int>()
     << ")\n";
  return os.str();
}

}  // namespace stepctl
