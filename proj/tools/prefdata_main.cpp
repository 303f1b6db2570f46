// prefdata: build preference-pair datasets from sampled responses.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <optional>
#include <random>

#include "prefdata/config.hpp"
#include "prefdata/dpolab.hpp"
#include "prefdata/jsonl.hpp"
#include "prefdata/pipeline.hpp"

namespace {

using namespace prefdata;

struct Overrides {
  std::optional<int> k;
  std::optional<double> delta;
  std::optional<double> epsilon;
  std::optional<double> alpha;
  std::optional<int> cap;
  std::optional<std::string> strategy;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::size_t> max_pairs;
  std::optional<int> resamples;
  std::optional<int> eval_k;
  std::optional<std::string> format;
  bool drop_zero_gap = false;
};

PipelineConfig build_config(const std::string& path, const Overrides& o) {
  PipelineConfig c;
  if (!path.empty()) apply_config_file(c, path);
  if (o.k) c.k = *o.k;
  if (o.delta) c.delta = *o.delta;
  if (o.epsilon) c.epsilon = *o.epsilon;
  if (o.alpha) c.alpha_percent = *o.alpha;
  if (o.cap) c.pair_cap = *o.cap;
  if (o.strategy) c.strategy = parse_strategy(*o.strategy);
  if (o.seed) c.rng_seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.max_pairs) c.max_pairs = *o.max_pairs;
  if (o.resamples) c.resamples = *o.resamples;
  if (o.eval_k) c.eval_k = *o.eval_k;
  if (o.format) c.export_format = parse_export_format(*o.format);
  if (o.drop_zero_gap) c.drop_zero_gap = true;
  validate(c);
  return c;
}

int print_summary(const RunManifest& m) {
  std::cout << "prompts_loaded " << m.prompts_loaded << "\n"
            << "initial_generations " << m.initial_generations << "\n"
            << "responses_entering_pairing " << m.responses_entering_pairing << "\n"
            << "surviving_pairs " << m.surviving_pairs << "\n"
            << "unique_prompts " << m.unique_prompts << "\n";
  if (m.failed_stage) {
    std::cerr << "stage " << *m.failed_stage << " failed: " << m.failure_message.value_or("") << "\n";
    return 1;
  }
  if (!m.reconciles()) {
    std::cerr << "manifest counters do not reconcile\n";
    return 1;
  }
  return 0;
}

int losscheck(double beta, double ls) {
  std::printf("delta,label_smoothing,beta,loss\n");
  for (double lam : {0.0, 0.05, 0.3}) {
    std::printf("0,%g,%g,%.17g\n", lam, beta, dpolab::dpo_loss({0, 0, 0, 0, 1.0}, beta, lam));
  }
  for (double d : {-10.0, -1.0, 1.0, 10.0}) {
    std::printf("%g,%g,%g,%.17g\n", d, ls, beta, dpolab::dpo_loss({d, 0, 0, 0, 1.0}, beta, ls));
  }
  return 0;
}

int gradcheck(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lp(-60.0, 0.0), b(0.01, 1.0), lam(0.0, 0.49), w(0.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const dpolab::PairLogits p{lp(rng), lp(rng), lp(rng), lp(rng), w(rng)};
    worst = std::max(worst, dpolab::dpo_grad_check(p, b(rng), lam(rng)));
  }
  std::printf("cases %d max_relative_error %.3e\n", n, worst);
  return worst < 1e-5 ? 0 : 1;
}

int toytrain(const std::string& fixture, const std::string& out) {
  const auto f = dpolab::load_toy_fixture(fixture);
  const auto result = dpolab::toy_train(f.outcomes, f.pairs, f.options);
  const std::string csv = dpolab::curve_csv(result);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file_atomic(out, csv);
  }
  return 0;
}

dpolab::CheckpointMetrics metrics_from(const nlohmann::json& j) {
  return {j.at("mean_diversity").get<double>(), j.at("mean_if").get<double>(), j.at("safety_rate").get<double>()};
}

int select(const std::string& metrics_path, const std::string& baseline_path, double tau_if, double tau_s) {
  std::vector<dpolab::CheckpointMetrics> candidates;
  std::istringstream in(read_file(metrics_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    candidates.push_back(metrics_from(nlohmann::json::parse(line)));
  }
  const auto baseline = metrics_from(nlohmann::json::parse(read_file(baseline_path)));
  const auto pick = dpolab::select_checkpoint(candidates, baseline, tau_if, tau_s);
  if (!pick) {
    std::cout << "no eligible checkpoint\n";
    return 3;
  }
  std::cout << *pick << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("prefdata"));

  CLI::App app{"Build diversity-aware preference pairs from sampled responses"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  std::string config_path, prompts, out_dir = "out", validation, logprobs, log_level = "info";
  bool resume = false, mock = false, show_config = false, dump_sim = false;
  Overrides o;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--prompts", prompts, "prompts JSONL (prompt_id, prompt_text, category)");
  app.add_option("--out-dir", out_dir, "run directory");
  app.add_option("--k", o.k, "samples per prompt per model");
  app.add_option("--delta", o.delta, "quality tolerance");
  app.add_option("--epsilon", o.epsilon, "max reward gap within a pair");
  app.add_option("--alpha", o.alpha, "percent of ranked pairs kept");
  app.add_option("--cap", o.cap, "max pairs per response");
  app.add_option("--strategy", o.strategy, "redipo, vanilla-dpo, divpo or random");
  app.add_option("--seed", o.seed, "RNG seed");
  app.add_option("--workers", o.workers, "prompt-level worker threads");
  app.add_option("--max-pairs", o.max_pairs, "global pair limit for baselines (0 = none)");
  app.add_option("--resamples", o.resamples, "bootstrap resamples");
  app.add_option("--eval-k", o.eval_k, "samples per validation prompt");
  app.add_option("--format", o.format, "export format: flat or conversational");
  app.add_option("--validation", validation, "validation prompts JSONL for eval");
  app.add_option("--logprobs", logprobs, "JSONL of response_id, logprob, token_count for divpo");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");
  app.add_flag("--drop-zero-gap", o.drop_zero_gap, "exclude pairs with equal diversity");
  app.add_flag("--resume", resume, "skip stages whose inputs and settings are unchanged");
  app.add_flag("--mock", mock, "use in-process mock endpoints");
  app.add_flag("--dump-sim-matrix", dump_sim, "write per-prompt similarity matrices");
  app.add_flag("--show-config", show_config, "print the effective configuration and exit");

  std::vector<std::pair<CLI::App*, std::vector<pipeline::Stage>>> stage_cmds;
  for (auto stage : pipeline::kAllStages) {
    auto* sub = app.add_subcommand(std::string(pipeline::to_string(stage)), "run the " +
                                                                                std::string(pipeline::to_string(stage)) +
                                                                                " stage");
    stage_cmds.push_back({sub, {stage}});
  }
  auto* all = app.add_subcommand("all", "run every stage from generate to export (and eval with --validation)");

  auto* lab = app.add_subcommand("dpolab", "DPO objective checks");
  lab->require_subcommand(1);
  double beta = 0.03, ls = 0.05, tau_if = dpolab::kDefaultTauIf, tau_s = dpolab::kDefaultTauS;
  int n = 1000;
  std::uint64_t lab_seed = 0;
  std::string fixture, csv_out, metrics, baseline;
  auto* loss = lab->add_subcommand("losscheck", "print the loss at reference points");
  loss->add_option("--beta", beta);
  loss->add_option("--label-smoothing", ls);
  auto* grad = lab->add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  grad->add_option("--n", n, "random cases");
  grad->add_option("--seed", lab_seed);
  auto* toy = lab->add_subcommand("toytrain", "train a toy categorical policy; prints the loss curve as CSV");
  toy->add_option("--fixture", fixture)->required()->check(CLI::ExistingFile);
  toy->add_option("--out", csv_out, "CSV path (stdout when omitted)");
  auto* sel = lab->add_subcommand("select", "pick a checkpoint under the quality and safety gates");
  sel->add_option("--metrics", metrics, "JSONL of candidate metrics")->required()->check(CLI::ExistingFile);
  sel->add_option("--baseline", baseline, "JSON of instruct baseline metrics")->required()->check(CLI::ExistingFile);
  sel->add_option("--tau-if", tau_if);
  sel->add_option("--tau-s", tau_s);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*loss) return losscheck(beta, ls);
    if (*grad) return gradcheck(n, lab_seed);
    if (*toy) return toytrain(fixture, csv_out);
    if (*sel) return select(metrics, baseline, tau_if, tau_s);

    const PipelineConfig config = build_config(config_path, o);
    if (show_config) {
      std::cout << render_config(config);
      return 0;
    }

    pipeline::RunPlan plan;
    if (*all) {
      plan = pipeline::RunPlan::full(prompts, out_dir, validation);
    } else {
      for (auto& [sub, stages] : stage_cmds) {
        if (*sub) plan.stages = stages;
      }
      if (plan.stages.empty()) {
        std::cout << app.help();
        return 2;
      }
      plan.prompts_path = prompts;
      plan.out_dir = out_dir;
      plan.validation_path = validation;
    }
    plan.logprobs_path = logprobs;
    plan.resume = resume;
    plan.force_mock = mock;
    plan.dump_sim_matrix = dump_sim;
    return print_summary(pipeline::run_pipeline(plan, config));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pipeline::PlanError& e) {
    std::cerr << "plan error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
