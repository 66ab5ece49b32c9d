// stepctl: run controlled reasoning sessions, train the pilot, analyze traces.
//
// Exit codes: 0 success, 1 input error, 2 backend error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "stepctl/checkpoint.hpp"
#include "stepctl/error.hpp"
#include "stepctl/harness.hpp"
#include "stepctl/synthetic.hpp"

using namespace stepctl;

namespace {

// Every config field gets a flag of the same name; flags win over the file.
struct ConfigFlags {
  std::optional<std::string> config_path;
  std::optional<double> tau_fast, tau_slow, tau_skip, delta, temperature, top_p;
  std::optional<int> k_fast, k_slow, k_skip, max_total_tokens, top_k_logprobs;
  bool forced_normal = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file {fsm:{...}, sampling:{...}}");
    app->add_option("--tau_fast", tau_fast);
    app->add_option("--tau_slow", tau_slow);
    app->add_option("--tau_skip", tau_skip);
    app->add_option("--delta", delta);
    app->add_option("--k_fast", k_fast);
    app->add_option("--k_slow", k_slow);
    app->add_option("--k_skip", k_skip);
    app->add_option("--temperature", temperature);
    app->add_option("--top_p", top_p);
    app->add_option("--max_total_tokens", max_total_tokens);
    app->add_option("--top_k_logprobs", top_k_logprobs);
    app->add_flag("--forced-normal", forced_normal, "thresholds at the (0,1) extremes: plain chain-of-thought");
  }

  ControllerConfig resolve() const {
    ControllerConfig cfg = config_path ? load_controller_config(*config_path) : ControllerConfig{};
    if (forced_normal) cfg.fsm = FsmConfig::forced_normal();
    if (tau_fast) cfg.fsm.tau_fast = *tau_fast;
    if (tau_slow) cfg.fsm.tau_slow = *tau_slow;
    if (tau_skip) cfg.fsm.tau_skip = *tau_skip;
    if (delta) cfg.fsm.delta = *delta;
    if (k_fast) cfg.fsm.k_fast = *k_fast;
    if (k_slow) cfg.fsm.k_slow = *k_slow;
    if (k_skip) cfg.fsm.k_skip = *k_skip;
    if (temperature) cfg.sampling.temperature = *temperature;
    if (top_p) cfg.sampling.top_p = *top_p;
    if (max_total_tokens) cfg.sampling.max_total_tokens = *max_total_tokens;
    if (top_k_logprobs) cfg.sampling.top_k_logprobs = *top_k_logprobs;
    return cfg;
  }
};

int exit_code_for(const Error& e) { return e.code() == Errc::BackendFailure ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepctl - difficulty-aware reasoning controller"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run every dataset question through the controller");
  RunManifest manifest;
  ConfigFlags run_cfg;
  std::string backend_name = "scripted";
  run_cfg.attach(run);
  run->add_option("--dataset", manifest.dataset_path, "JSONL {id, question, gold}")->required();
  run->add_option("--backend", backend_name, "scripted | openai")->check(CLI::IsMember({"scripted", "openai"}));
  run->add_option("--script", manifest.script_path, "script file for the scripted backend");
  run->add_option("--base-url", manifest.openai.base_url, "OpenAI-compatible base URL (…/v1)");
  run->add_option("--model", manifest.openai.model);
  run->add_option("--api-key-env", manifest.openai.api_key_env, "environment variable holding the API key");
  run->add_option("--max-tokens-per-call", manifest.openai.max_tokens_per_call);
  run->add_option("--out", manifest.output_path, "output trace JSONL")->required();
  run->add_option("--grades-out", manifest.grades_output_path, "write {id: {gold, correct}} JSON");
  run->add_option("--seed", manifest.seed);
  run->add_option("--pilot", manifest.pilot_checkpoint, "pilot checkpoint (default: seeded untrained pilot)");
  run->add_option("--hidden-dim", manifest.pilot_hidden_dim);
  run->add_option("--constant-difficulty", manifest.constant_difficulty, "replace the pilot with a fixed score");
  run->add_option("--embedding-url", manifest.embedding_url, "HTTP embedding endpoint (default: hashing)");
  run->add_option("--parallel", manifest.parallel, "concurrent sessions");
  run->add_flag("--append", manifest.append, "append to the trace file");
  bool no_timing = false;
  run->add_flag("--no-timing", no_timing, "omit wall-clock overhead so traces are byte-reproducible");

  // train-pilot
  auto* tr = app.add_subcommand("train-pilot", "distill the pilot from teacher targets");
  TrainCommand train_cmd;
  tr->add_option("--data", train_cmd.data_path, "JSONL {id, z, targets}")->required();
  tr->add_option("--out", train_cmd.checkpoint_path, "checkpoint path")->required();
  tr->add_option("--loss-curve", train_cmd.loss_curve_path, "CSV of per-epoch loss");
  tr->add_option("--epochs", train_cmd.train.epochs);
  tr->add_option("--lr", train_cmd.train.learning_rate);
  tr->add_option("--batch-size", train_cmd.train.batch_size);
  tr->add_option("--seed", train_cmd.train.seed);
  tr->add_option("--patience", train_cmd.train.patience);
  tr->add_option("--hidden-dim", train_cmd.hidden_dim);
  tr->add_option("--holdout", train_cmd.holdout_fraction, "held-out fraction for the fidelity report");

  // synth-data
  auto* syn = app.add_subcommand("synth-data", "generate synthetic-teacher distillation data");
  std::size_t synth_count = 500;
  std::uint64_t synth_seed = 1, teacher_seed = 7;
  std::string synth_out;
  syn->add_option("--count", synth_count);
  syn->add_option("--seed", synth_seed);
  syn->add_option("--teacher-seed", teacher_seed);
  syn->add_option("--out", synth_out)->required();

  // analyze
  auto* an = app.add_subcommand("analyze", "compare a baseline and a treated trace set");
  AnalyzeCommand analyze_cmd;
  std::optional<std::string> cues_path, report_out;
  std::optional<int> window;
  bool table = false;
  an->add_option("--baseline", analyze_cmd.baseline_path)->required();
  an->add_option("--treated", analyze_cmd.treated_path)->required();
  an->add_option("--grades", analyze_cmd.grades_path, "grades for the treated run")->required();
  an->add_option("--baseline-grades", analyze_cmd.baseline_grades_path);
  an->add_option("--cues", cues_path, "JSON {reflection_cues, branching_cues, window}");
  an->add_option("--window", window, "forward window W")->check(CLI::Range(0, 1000));
  an->add_option("--out", report_out, "write the JSON report here instead of stdout");
  an->add_flag("--table", table, "print an aligned text table");

  // config
  auto* cfg_cmd = app.add_subcommand("config", "print the resolved config after validation");
  ConfigFlags show_cfg;
  show_cfg.attach(cfg_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      manifest.backend = backend_name == "openai" ? BackendKind::OpenAi : BackendKind::Scripted;
      manifest.config = run_cfg.resolve();
      manifest.record_timing = !no_timing;
      const RunSummary summary = cmd_run(manifest);
      std::cout << format_run_summary(summary);
      if (summary.backend_failures > 0) {
        std::cerr << summary.backend_failures << " session(s) failed in the backend\n";
        return 2;
      }
    } else if (*tr) {
      const auto res = cmd_train_pilot(train_cmd);
      std::cout << "trained on " << res.n_train << " trajectories in " << res.seconds << " s ("
                << res.loss_history.size() << " epochs)\n";
      if (!res.loss_history.empty()) std::cout << "final training loss: " << res.loss_history.back() << '\n';
      if (res.holdout_pearson) {
        std::cout << "held-out (" << res.n_holdout << ") pearson " << *res.holdout_pearson << ", spearman "
                  << *res.holdout_spearman << '\n';
      }
    } else if (*syn) {
      write_train_samples(synth_out, make_synthetic_dataset(synth_count, synth_seed, teacher_seed));
      std::cout << "wrote " << synth_count << " trajectories to " << synth_out << '\n';
    } else if (*an) {
      if (cues_path) {
        std::ifstream in(*cues_path);
        if (!in) throw Error(Errc::MalformedInput, "cannot open cue file: " + *cues_path);
        nlohmann::json j;
        in >> j;
        analyze_cmd.cues = j.get<CueConfig>();
      }
      if (window) analyze_cmd.cues.window = *window;
      const auto report = cmd_analyze(analyze_cmd);
      if (report_out) {
        std::ofstream out(*report_out);
        out << report.dump(2) << '\n';
      } else if (!table) {
        std::cout << report.dump(2) << '\n';
      }
      if (table) std::cout << format_analysis_table(report);
    } else if (*cfg_cmd) {
      const ControllerConfig cfg = show_cfg.resolve();
      validate_config(cfg.fsm);
      validate_config(cfg.sampling);
      std::cout << controller_config_json(cfg).dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
