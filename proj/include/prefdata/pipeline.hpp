#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "prefdata/config.hpp"
#include "prefdata/genclient/clients.hpp"
#include "prefdata/jsonl.hpp"
#include "prefdata/manifest.hpp"
#include "prefdata/types.hpp"

namespace prefdata::pipeline {

enum class Stage { generate, rewrite, filter, diversity, pair, export_dataset, eval };

inline constexpr std::array<Stage, 7> kAllStages{Stage::generate, Stage::rewrite,        Stage::filter, Stage::diversity,
                                                 Stage::pair,     Stage::export_dataset, Stage::eval};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

class PlanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A stage could not complete; the message names the prompt when one is at
// fault.
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunPlan {
  std::vector<Stage> stages;
  std::string prompts_path;
  std::string out_dir = "out";
  std::string validation_path;  // eval stage input
  std::string logprobs_path;    // optional DivPO table; mock values when empty
  bool resume = false;
  bool force_mock = false;
  bool dump_sim_matrix = false;

  // generate through export, plus eval when a validation file is given.
  static RunPlan full(std::string prompts_path, std::string out_dir, std::string validation_path = {});
};

// Throws PlanError unless the stages are distinct and in pipeline order.
void validate(const RunPlan& plan);

// Every client the pipeline needs, sharing one embedding cache.
struct Clients {
  std::vector<std::shared_ptr<genclient::ManagedTransport>> transports;
  std::shared_ptr<genclient::EmbeddingCache> cache;
  std::unique_ptr<genclient::SamplerClient> base;
  std::unique_ptr<genclient::SamplerClient> instruct;
  std::unique_ptr<genclient::RewriterClient> rewriter;
  std::unique_ptr<genclient::EmbedderClient> embedder;
  std::unique_ptr<genclient::RewardClient> reward;
  std::unique_ptr<genclient::SafetyJudgeClient> judge;

  // Requests attempted against the endpoints so far, retries included.
  std::size_t total_attempts() const;
};

Clients make_clients(const PipelineConfig& config, bool force_mock);

// Output file names inside the run directory.
namespace files {
inline constexpr std::string_view kPromptsSelected = "prompts.selected.jsonl";
inline constexpr std::string_view kGenerations = "generations.jsonl";
inline constexpr std::string_view kResponses = "responses.jsonl";
inline constexpr std::string_view kScored = "responses.scored.jsonl";
inline constexpr std::string_view kStage1 = "responses.stage1.jsonl";
inline constexpr std::string_view kStage2 = "responses.stage2.jsonl";
inline constexpr std::string_view kStage3 = "responses.stage3.jsonl";
inline constexpr std::string_view kPoolsFiltered = "pools.filtered.jsonl";
inline constexpr std::string_view kPools = "pools.jsonl";
inline constexpr std::string_view kDiversity = "diversity.jsonl";
inline constexpr std::string_view kEmbeddingCache = "embeddings.cache.jsonl";
inline constexpr std::string_view kSimMatrix = "sim_matrix.jsonl";
inline constexpr std::string_view kPairs = "pairs.jsonl";
inline constexpr std::string_view kDataset = "dpo_dataset.jsonl";
inline constexpr std::string_view kReport = "report.json";
inline constexpr std::string_view kManifest = "manifest.json";
inline constexpr std::string_view kStamps = "stamps.json";
inline constexpr std::string_view kTimings = "timings.json";
}  // namespace files

// Run the plan's stages in order, persisting each stage's outputs and the
// manifest after every stage. A failing stage is recorded in the manifest
// (failed_stage, failure_message) and the stages after it are not run; the
// manifest is returned rather than thrown. With plan.resume, a stage whose
// stamp (hash of its inputs and its config subset) and outputs are unchanged
// is skipped.
RunManifest run_pipeline(const RunPlan& plan, const PipelineConfig& config, Clients& clients);
RunManifest run_pipeline(const RunPlan& plan, const PipelineConfig& config);

class DanglingReferenceError : public std::runtime_error {
 public:
  DanglingReferenceError(std::vector<std::string> ids);
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

// Training records for the pairs, texts inlined. flat_jsonl gives
// {prompt, chosen, rejected} strings; conversational_jsonl wraps the prompt as
// a user message and each answer as an assistant message. Throws
// DanglingReferenceError listing every id missing from the pools.
std::vector<ojson> export_dpo_dataset(std::span<const PreferencePair> pairs, std::span<const PromptPool> pools,
                                      ExportFormat format);

// export_dpo_dataset written as JSONL; returns the record count.
std::size_t write_dpo_dataset(std::span<const PreferencePair> pairs, std::span<const PromptPool> pools,
                              ExportFormat format, const std::string& path);

}  // namespace prefdata::pipeline
