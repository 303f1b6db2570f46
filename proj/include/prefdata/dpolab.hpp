#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefdata::dpolab {

// Sequence log probabilities of one preference pair under the policy and the
// frozen reference. weight scales the pair's loss (DDPO sets it to the
// chosen response's diversity score).
struct PairLogits {
  double policy_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
  double weight = 1.0;
};

// (policy_chosen - ref_chosen) - (policy_rejected - ref_rejected)
double margin(const PairLogits& pair);

// log(sigmoid(x)) without overflow for any finite x.
template <typename Real>
Real log_sigmoid(Real x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename Real>
Real sigmoid(Real x) {
  if (x >= 0) return 1 / (1 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1 + e);
}

// Label-smoothed sigmoid DPO loss on the margin d:
//   w * [ -(1 - ls) * log_sigmoid(beta * d) - ls * log_sigmoid(-beta * d) ]
// Generic in the float type so the gradient check can run in long double.
template <typename Real>
Real loss_on_margin(Real d, Real weight, Real beta, Real label_smoothing) {
  const Real x = beta * d;
  return weight * (-(1 - label_smoothing) * log_sigmoid(x) - label_smoothing * log_sigmoid(-x));
}

// Throws std::invalid_argument for beta <= 0, label_smoothing outside
// [0, 0.5) or a negative weight.
double dpo_loss(const PairLogits& pair, double beta, double label_smoothing);

struct LossGradient {
  double policy_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;

  double max_abs() const;
};

// Analytic partial derivatives of dpo_loss with respect to the four log
// probabilities. dL/dd = w * beta * (sigmoid(beta * d) - 1 + ls); the signs
// follow d: (+, -, -, +) for (policy_chosen, policy_rejected, ref_chosen,
// ref_rejected).
LossGradient dpo_loss_gradient(const PairLogits& pair, double beta, double label_smoothing);

inline constexpr double kGradCheckStep = 1e-5;

// Max relative error between the analytic gradient and central finite
// differences of the loss (evaluated in long double). Relative error is
// |a - n| / max(|a|, |n|); components where both are exactly zero count as 0.
double dpo_grad_check(const PairLogits& pair, double beta, double label_smoothing, double step = kGradCheckStep);

// Toy categorical policy: one logit per outcome, trained by full-batch
// gradient descent on the mean DPO loss over the pairs.
struct ToyPair {
  std::size_t chosen = 0;
  std::size_t rejected = 0;
  double weight = 1.0;
};

struct ToyOptions {
  double beta = 0.1;
  double label_smoothing = 0.0;
  double lr = 0.1;
  int steps = 100;
  // Reference log probabilities; uniform when empty. The policy starts at the
  // reference.
  std::vector<double> reference_logprobs;
};

struct ToyResult {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::vector<double> loss_curve;                 // loss after t steps, t = 0..steps
  std::vector<std::vector<double>> margin_curves;  // per pair: policy log p(chosen) - log p(rejected)
};

inline constexpr std::size_t kMaxToyOutcomes = 64;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, const std::string& what)
      : std::runtime_error("toy_train diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

ToyResult toy_train(std::size_t outcomes, std::span<const ToyPair> pairs, const ToyOptions& options);

// Log-softmax of a logit vector.
std::vector<double> log_softmax(std::span<const double> logits);

// Toy problem read from JSON: {"outcomes", "beta", "label_smoothing", "lr",
// "steps", "pairs": [{"chosen", "rejected", "weight"}], "reference"?}.
struct ToyFixture {
  std::size_t outcomes = 0;
  std::vector<ToyPair> pairs;
  ToyOptions options;
};
ToyFixture load_toy_fixture(const std::string& path);
ToyFixture parse_toy_fixture(const std::string& text);

// Loss curve as CSV: header "step,loss,margin_0,...".
std::string curve_csv(const ToyResult& result);

struct CheckpointMetrics {
  double mean_diversity = 0.0;
  double mean_if = 0.0;
  double safety_rate = 0.0;  // in [0, 1]
};

inline constexpr double kDefaultTauIf = 6.0;
inline constexpr double kDefaultTauS = 0.15;

// Among candidates with mean_if >= baseline.mean_if - tau_if and
// safety_rate >= baseline.safety_rate - tau_s, the index with the highest
// mean_diversity (earliest on ties). nullopt when none is eligible. Throws
// std::invalid_argument on an empty list.
std::optional<std::size_t> select_checkpoint(std::span<const CheckpointMetrics> candidates,
                                             const CheckpointMetrics& instruct_baseline, double tau_if = kDefaultTauIf,
                                             double tau_s = kDefaultTauS);

}  // namespace prefdata::dpolab
