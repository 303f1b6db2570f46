#include "prefdata/dpolab.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "prefdata/config.hpp"
#include "prefdata/jsonl.hpp"

namespace prefdata::dpolab {

namespace {

void check_args(double beta, double label_smoothing, double weight) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) {
    throw std::invalid_argument("label_smoothing must be in [0, 0.5)");
  }
  if (!(weight >= 0.0)) throw std::invalid_argument("weight must be >= 0");
}

double dloss_dmargin(double d, double weight, double beta, double label_smoothing) {
  return weight * beta * (sigmoid(beta * d) - 1.0 + label_smoothing);
}

}  // namespace

double margin(const PairLogits& p) { return (p.policy_chosen - p.ref_chosen) - (p.policy_rejected - p.ref_rejected); }

double dpo_loss(const PairLogits& pair, double beta, double label_smoothing) {
  check_args(beta, label_smoothing, pair.weight);
  return loss_on_margin(margin(pair), pair.weight, beta, label_smoothing);
}

double LossGradient::max_abs() const {
  return std::max({std::abs(policy_chosen), std::abs(policy_rejected), std::abs(ref_chosen), std::abs(ref_rejected)});
}

LossGradient dpo_loss_gradient(const PairLogits& pair, double beta, double label_smoothing) {
  check_args(beta, label_smoothing, pair.weight);
  const double g = dloss_dmargin(margin(pair), pair.weight, beta, label_smoothing);
  return {g, -g, -g, g};
}

double dpo_grad_check(const PairLogits& pair, double beta, double label_smoothing, double step) {
  const LossGradient analytic = dpo_loss_gradient(pair, beta, label_smoothing);
  using LD = long double;
  const std::array<LD, 4> x{pair.policy_chosen, pair.policy_rejected, pair.ref_chosen, pair.ref_rejected};
  auto loss_at = [&](const std::array<LD, 4>& v) {
    const LD d = (v[0] - v[2]) - (v[1] - v[3]);
    return loss_on_margin<LD>(d, pair.weight, beta, label_smoothing);
  };
  const std::array<double, 4> a{analytic.policy_chosen, analytic.policy_rejected, analytic.ref_chosen,
                                analytic.ref_rejected};
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    auto hi = x;
    auto lo = x;
    hi[i] += step;
    lo[i] -= step;
    const double numeric = static_cast<double>((loss_at(hi) - loss_at(lo)) / (2 * static_cast<LD>(step)));
    const double scale = std::max(std::abs(a[i]), std::abs(numeric));
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(a[i] - numeric) / scale);
  }
  return worst;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

ToyResult toy_train(std::size_t outcomes, std::span<const ToyPair> pairs, const ToyOptions& options) {
  if (outcomes < 2 || outcomes > kMaxToyOutcomes) {
    throw std::invalid_argument("toy_train: outcome space must have 2.." + std::to_string(kMaxToyOutcomes) + " entries");
  }
  if (pairs.empty()) throw std::invalid_argument("toy_train: no pairs");
  if (options.steps < 0) throw std::invalid_argument("toy_train: steps must be >= 0");
  for (const auto& p : pairs) {
    if (p.chosen >= outcomes || p.rejected >= outcomes || p.chosen == p.rejected) {
      throw std::invalid_argument("toy_train: pair indices out of range or equal");
    }
    check_args(options.beta, options.label_smoothing, p.weight);
  }
  std::vector<double> ref = options.reference_logprobs;
  if (ref.empty()) ref.assign(outcomes, -std::log(static_cast<double>(outcomes)));
  if (ref.size() != outcomes) throw std::invalid_argument("toy_train: reference size does not match outcomes");

  ToyResult result;
  result.logits = ref;
  result.margin_curves.assign(pairs.size(), {});
  const double n = static_cast<double>(pairs.size());

  auto record = [&](int step) {
    const auto lp = log_softmax(result.logits);
    double loss = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      const PairLogits pl{lp[p.chosen], lp[p.rejected], ref[p.chosen], ref[p.rejected], p.weight};
      loss += dpo_loss(pl, options.beta, options.label_smoothing);
      result.margin_curves[i].push_back(lp[p.chosen] - lp[p.rejected]);
    }
    loss /= n;
    if (!std::isfinite(loss)) throw DivergenceError(step, "loss is not finite");
    result.loss_curve.push_back(loss);
    return lp;
  };

  auto lp = record(0);
  std::vector<double> grad(outcomes);
  for (int step = 1; step <= options.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    // The log-normalizer cancels in the margin, so each pair only touches its
    // two logits.
    for (const auto& p : pairs) {
      const double d = (lp[p.chosen] - ref[p.chosen]) - (lp[p.rejected] - ref[p.rejected]);
      const double g = dloss_dmargin(d, p.weight, options.beta, options.label_smoothing) / n;
      grad[p.chosen] += g;
      grad[p.rejected] -= g;
    }
    for (std::size_t i = 0; i < outcomes; ++i) result.logits[i] -= options.lr * grad[i];
    lp = record(step);
  }
  result.probabilities.resize(outcomes);
  for (std::size_t i = 0; i < outcomes; ++i) result.probabilities[i] = std::exp(lp[i]);
  return result;
}

ToyFixture parse_toy_fixture(const std::string& text) {
  ToyFixture f;
  try {
    const auto j = nlohmann::json::parse(text);
    f.outcomes = j.at("outcomes").get<std::size_t>();
    f.options.beta = j.at("beta").get<double>();
    f.options.label_smoothing = j.value("label_smoothing", 0.0);
    f.options.lr = j.at("lr").get<double>();
    f.options.steps = j.at("steps").get<int>();
    if (j.contains("reference")) f.options.reference_logprobs = j.at("reference").get<std::vector<double>>();
    for (const auto& p : j.at("pairs")) {
      f.pairs.push_back({p.at("chosen").get<std::size_t>(), p.at("rejected").get<std::size_t>(), p.value("weight", 1.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("toy fixture: ") + e.what());
  }
  return f;
}

ToyFixture load_toy_fixture(const std::string& path) { return parse_toy_fixture(read_file(path)); }

std::string curve_csv(const ToyResult& result) {
  std::ostringstream out;
  out << "step,loss";
  for (std::size_t i = 0; i < result.margin_curves.size(); ++i) out << ",margin_" << i;
  out << '\n';
  for (std::size_t t = 0; t < result.loss_curve.size(); ++t) {
    out << t << ',' << format_real(result.loss_curve[t]);
    for (const auto& m : result.margin_curves) out << ',' << format_real(m[t]);
    out << '\n';
  }
  return out.str();
}

std::optional<std::size_t> select_checkpoint(std::span<const CheckpointMetrics> candidates,
                                             const CheckpointMetrics& instruct_baseline, double tau_if, double tau_s) {
  if (candidates.empty()) throw std::invalid_argument("select_checkpoint: no candidates");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.safety_rate < 0.0 || c.safety_rate > 1.0) {
      throw std::invalid_argument("select_checkpoint: safety_rate out of [0,1] at index " + std::to_string(i));
    }
    if (c.mean_if < instruct_baseline.mean_if - tau_if) continue;
    if (c.safety_rate < instruct_baseline.safety_rate - tau_s) continue;
    if (!best || c.mean_diversity > candidates[*best].mean_diversity) best = i;
  }
  return best;
}

}  // namespace prefdata::dpolab
