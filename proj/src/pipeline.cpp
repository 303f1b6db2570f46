#include "prefdata/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <set>
#include <unordered_set>

#include "prefdata/diversity.hpp"
#include "prefdata/evalkit.hpp"
#include "prefdata/filters.hpp"
#include "prefdata/hash.hpp"
#include "prefdata/pairing.hpp"
#include "prefdata/parallel.hpp"

namespace prefdata::pipeline {

namespace fs = std::filesystem;
using genclient::Role;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::generate: return "generate";
    case Stage::rewrite: return "rewrite";
    case Stage::filter: return "filter";
    case Stage::diversity: return "diversity";
    case Stage::pair: return "pair";
    case Stage::export_dataset: return "export";
    case Stage::eval: return "eval";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw PlanError("unknown stage: " + std::string(name));
}

RunPlan RunPlan::full(std::string prompts_path, std::string out_dir, std::string validation_path) {
  RunPlan plan;
  plan.stages = {Stage::generate, Stage::rewrite, Stage::filter, Stage::diversity, Stage::pair, Stage::export_dataset};
  if (!validation_path.empty()) plan.stages.push_back(Stage::eval);
  plan.prompts_path = std::move(prompts_path);
  plan.out_dir = std::move(out_dir);
  plan.validation_path = std::move(validation_path);
  return plan;
}

void validate(const RunPlan& plan) {
  if (plan.stages.empty()) throw PlanError("plan has no stages");
  for (std::size_t i = 1; i < plan.stages.size(); ++i) {
    if (static_cast<int>(plan.stages[i]) <= static_cast<int>(plan.stages[i - 1])) {
      throw PlanError("stage " + std::string(to_string(plan.stages[i])) + " cannot follow " +
                      std::string(to_string(plan.stages[i - 1])));
    }
  }
  if (plan.out_dir.empty()) throw PlanError("out_dir is empty");
  if (plan.stages.front() == Stage::generate && plan.prompts_path.empty()) {
    throw PlanError("generate needs a prompts file");
  }
  if (std::find(plan.stages.begin(), plan.stages.end(), Stage::eval) != plan.stages.end() &&
      plan.validation_path.empty()) {
    throw PlanError("eval needs a validation prompts file");
  }
}

std::size_t Clients::total_attempts() const {
  std::size_t n = 0;
  for (const auto& t : transports) n += t->attempts();
  return n;
}

Clients make_clients(const PipelineConfig& config, bool force_mock) {
  Clients c;
  auto transport = [&](Role role) {
    auto t = genclient::make_transport(config.endpoint(role), config, force_mock);
    c.transports.push_back(t);
    return t;
  };
  c.cache = std::make_shared<genclient::EmbeddingCache>();
  c.base = std::make_unique<genclient::SamplerClient>(transport(Role::generate_base),
                                                      config.endpoint(Role::generate_base));
  c.instruct = std::make_unique<genclient::SamplerClient>(transport(Role::generate_instruct),
                                                          config.endpoint(Role::generate_instruct));
  c.rewriter = std::make_unique<genclient::RewriterClient>(transport(Role::rewrite), config.endpoint(Role::rewrite));
  c.embedder =
      std::make_unique<genclient::EmbedderClient>(transport(Role::embed), config.endpoint(Role::embed), c.cache);
  c.reward = std::make_unique<genclient::RewardClient>(transport(Role::reward), config.endpoint(Role::reward));
  c.judge = std::make_unique<genclient::SafetyJudgeClient>(transport(Role::safety), config.endpoint(Role::safety));
  return c;
}

namespace {

struct Context {
  const RunPlan& plan;
  const PipelineConfig& config;
  Clients& clients;
  RunManifest& manifest;

  std::string path(std::string_view name) const { return (fs::path(plan.out_dir) / name).string(); }
};

std::string prompt_error(const std::string& prompt_id, const std::exception& e) {
  return "prompt " + prompt_id + ": " + e.what();
}

// Run fn over every index; a failure is rethrown as a StageError naming the
// prompt.
template <typename Fn>
void for_each_prompt(const Context& ctx, const std::vector<std::string>& prompt_ids, Fn fn) {
  parallel_for(prompt_ids.size(), ctx.config.workers, [&](std::size_t i) {
    try {
      fn(i);
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(prompt_error(prompt_ids[i], e));
    }
  });
}

template <typename T>
std::vector<std::string> ids_of(const std::vector<T>& items) {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& x : items) out.push_back(x.prompt_id);
  return out;
}

std::vector<ResponseRecord> flatten(const std::vector<PromptPool>& pools) {
  std::vector<ResponseRecord> out;
  for (const auto& p : pools) out.insert(out.end(), p.responses.begin(), p.responses.end());
  return out;
}

std::size_t count_responses(const std::vector<PromptPool>& pools) {
  std::size_t n = 0;
  for (const auto& p : pools) n += p.responses.size();
  return n;
}

// ---- stages ----

void run_generate(Context& ctx) {
  const auto prompts = read_jsonl<PromptRecord>(ctx.plan.prompts_path);
  const std::set<Category> wanted(ctx.config.categories.begin(), ctx.config.categories.end());
  std::vector<PromptRecord> selected;
  for (const auto& p : prompts) {
    if (wanted.contains(p.category)) selected.push_back(p);
  }
  ctx.manifest.prompts_loaded = prompts.size();
  ctx.manifest.prompts_skipped_category = prompts.size() - selected.size();

  std::vector<std::vector<ResponseRecord>> per(selected.size());
  for_each_prompt(ctx, ids_of(selected), [&](std::size_t i) {
    const auto& p = selected[i];
    const auto base = ctx.clients.base->sample(p.prompt_text, ctx.config.k, ctx.config.decoding);
    const auto instruct = ctx.clients.instruct->sample(p.prompt_text, ctx.config.k, ctx.config.decoding);
    auto add = [&](Origin origin, const std::vector<std::string>& texts) {
      for (std::size_t j = 0; j < texts.size(); ++j) {
        ResponseRecord r;
        r.prompt_id = p.prompt_id;
        r.origin = origin;
        r.sample_index = static_cast<int>(j);
        r.text = texts[j];
        r.response_id = make_response_id(p.prompt_id, origin, r.sample_index, r.text);
        per[i].push_back(std::move(r));
      }
    };
    add(Origin::base_raw, base);
    add(Origin::instruct, instruct);
  });

  std::vector<ResponseRecord> all;
  for (auto& v : per) all.insert(all.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  write_jsonl(selected, ctx.path(files::kPromptsSelected));
  ctx.manifest.initial_generations = write_jsonl(all, ctx.path(files::kGenerations));
}

void run_rewrite(Context& ctx) {
  const auto prompts = read_jsonl<PromptRecord>(ctx.path(files::kPromptsSelected));
  auto pools = group_into_pools(prompts, read_jsonl<ResponseRecord>(ctx.path(files::kGenerations)));
  std::vector<std::size_t> dropped(pools.size(), 0), added(pools.size(), 0);

  for_each_prompt(ctx, ids_of(pools), [&](std::size_t i) {
    auto& pool = pools[i];
    std::vector<ResponseRecord> out;
    for (const auto& r : pool.responses) {
      if (r.origin != Origin::base_raw) {
        out.push_back(r);
        continue;
      }
      if (ctx.config.include_base_raw) out.push_back(r);
      auto text = ctx.clients.rewriter->rewrite(pool.prompt_text, r.text);
      if (!text || text->empty()) {
        if (!ctx.config.include_base_raw) ++dropped[i];
        continue;
      }
      ResponseRecord w;
      w.prompt_id = r.prompt_id;
      w.origin = Origin::base_rewritten;
      w.sample_index = r.sample_index;
      w.parent_id = r.response_id;
      w.text = std::move(*text);
      w.response_id = make_response_id(w.prompt_id, w.origin, w.sample_index, w.text);
      out.push_back(std::move(w));
      if (ctx.config.include_base_raw) ++added[i];
    }
    pool.responses = std::move(out);
    pool.sort_responses();
  });

  ctx.manifest.rewrite_dropped = 0;
  ctx.manifest.rewrites_added = 0;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    ctx.manifest.rewrite_dropped += dropped[i];
    ctx.manifest.rewrites_added += added[i];
  }
  write_jsonl(flatten(pools), ctx.path(files::kResponses));
}

void run_filter(Context& ctx) {
  const auto prompts = read_jsonl<PromptRecord>(ctx.path(files::kPromptsSelected));
  auto pools = group_into_pools(prompts, read_jsonl<ResponseRecord>(ctx.path(files::kResponses)));
  const std::size_t n = pools.size();
  std::vector<filters::FilterOutcome> o1(n), o2(n), o3(n);
  std::vector<PromptPool> after1(n), after2(n);
  std::vector<std::optional<PromptPool>> after3(n);
  std::vector<bool> has2(n, false);

  for_each_prompt(ctx, ids_of(pools), [&](std::size_t i) {
    auto& pool = pools[i];
    for (auto& r : pool.responses) r.safety_label = ctx.clients.judge->judge(pool.prompt_text, r.text);
    // Unsafe instruct responses are scored only when they feed the mean.
    for (auto& r : pool.responses) {
      const bool needed = *r.safety_label == SafetyLabel::safe ||
                          (!ctx.config.mean_after_safety && r.origin == Origin::instruct);
      if (needed) r.if_score = ctx.clients.reward->score(pool.prompt_text, r.text);
    }
    auto s1 = filters::filter_safety(pool);
    o1[i] = std::move(s1.outcome);
    after1[i] = *s1.pool;
    std::span<const ResponseRecord> basis;
    if (!ctx.config.mean_after_safety) basis = pool.responses;
    auto s2 = filters::filter_quality(after1[i], ctx.config.delta, basis);
    o2[i] = std::move(s2.outcome);
    if (!s2.pool) return;
    after2[i] = std::move(*s2.pool);
    has2[i] = true;
    auto s3 = filters::filter_min_samples(after2[i]);
    o3[i] = std::move(s3.outcome);
    after3[i] = std::move(s3.pool);
  });

  std::vector<PromptPool> pools2, pools3;
  std::vector<filters::FilterOutcome> outcomes3;
  for (std::size_t i = 0; i < n; ++i) {
    if (!has2[i]) continue;
    pools2.push_back(after2[i]);
    outcomes3.push_back(o3[i]);
    if (after3[i]) pools3.push_back(std::move(*after3[i]));
  }

  const auto sum1 = filters::summarize(FilterStage::safety, o1);
  const auto sum2 = filters::summarize(FilterStage::quality, o2);
  const auto sum3 = filters::summarize(FilterStage::min_samples, outcomes3);
  auto& m = ctx.manifest;
  m.safety_removed = sum1.removed_responses;
  m.quality_removed = sum2.removed_responses;
  m.prompts_removed_quality = sum2.removed_prompts;
  m.prompts_removed_min_samples = sum3.removed_prompts;
  m.min_samples_responses_removed = sum3.removed_responses;
  m.filter_outcomes = {sum1, sum2, sum3};

  write_jsonl(flatten(pools), ctx.path(files::kScored));
  write_jsonl(flatten(after1), ctx.path(files::kStage1));
  write_jsonl(flatten(pools2), ctx.path(files::kStage2));
  write_jsonl(flatten(pools3), ctx.path(files::kStage3));
  write_jsonl(pools3, ctx.path(files::kPoolsFiltered));
}

void run_diversity(Context& ctx) {
  auto pools = read_jsonl<PromptPool>(ctx.path(files::kPoolsFiltered));
  const std::string cache_path = ctx.path(files::kEmbeddingCache);
  ctx.clients.cache->load(cache_path);
  std::vector<diversity::DiversityReport> reports(pools.size());

  for_each_prompt(ctx, ids_of(pools), [&](std::size_t i) {
    auto& pool = pools[i];
    if (pool.filtered_through != FilterStage::min_samples) {
      throw filters::StageOrderError("diversity scoring needs fully filtered pools");
    }
    std::vector<std::string> texts;
    for (const auto& r : pool.responses) texts.push_back(r.text);
    const auto vecs = ctx.clients.embedder->embed(texts);
    std::vector<diversity::EmbeddedResponse> embedded;
    for (std::size_t j = 0; j < vecs.size(); ++j) {
      embedded.push_back({pool.responses[j].response_id, vecs[j]});
      pool.responses[j].embedding_ref = genclient::EmbedderClient::key_for(pool.responses[j].text);
    }
    reports[i] = diversity::marginal_diversity(pool.prompt_id, embedded, ctx.plan.dump_sim_matrix);
    diversity::apply(reports[i], pool);
  });

  std::string div_text, sim_text;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const auto& e : reports[i].entries) {
      div_text += encode_line(ojson{{"prompt_id", pools[i].prompt_id},
                                    {"response_id", e.response_id},
                                    {"diversity_score", e.diversity},
                                    {"neighbor_id", e.neighbor_id}});
      div_text += '\n';
    }
    if (ctx.plan.dump_sim_matrix) {
      std::vector<std::string> ids;
      for (const auto& e : reports[i].entries) ids.push_back(e.response_id);
      sim_text += encode_line(ojson{{"prompt_id", pools[i].prompt_id},
                                    {"response_ids", ids},
                                    {"similarity", reports[i].similarity}});
      sim_text += '\n';
    }
  }
  write_jsonl(pools, ctx.path(files::kPools));
  write_file_atomic(ctx.path(files::kDiversity), div_text);
  if (ctx.plan.dump_sim_matrix) write_file_atomic(ctx.path(files::kSimMatrix), sim_text);
  ctx.clients.cache->save(cache_path);
  ctx.manifest.responses_entering_pairing = count_responses(pools);
}

void run_pair(Context& ctx) {
  const auto pools = read_jsonl<PromptPool>(ctx.path(files::kPools));
  const auto& c = ctx.config;
  pairing::RedipoOptions opt;
  opt.epsilon = c.epsilon;
  opt.alpha_percent = c.alpha_percent;
  opt.cap = c.effective_pair_cap();
  opt.alpha_base = c.alpha_after_cap ? pairing::AlphaBase::post_cap : pairing::AlphaBase::pre_cap;
  opt.drop_zero_gap = c.drop_zero_gap;

  std::vector<PreferencePair> pairs;
  switch (c.strategy) {
    case Strategy::redipo:
    case Strategy::random: {
      std::vector<std::vector<PreferencePair>> per(pools.size());
      for_each_prompt(ctx, ids_of(pools), [&](std::size_t i) {
        per[i] = c.strategy == Strategy::redipo ? pairing::select_redipo_pairs(pools[i], opt)
                                                : pairing::select_random_pairs(pools[i], opt, c.rng_seed);
      });
      for (auto& v : per) pairs.insert(pairs.end(), v.begin(), v.end());
      break;
    }
    case Strategy::vanilla_dpo:
      pairs = pairing::select_vanilla_dpo_pairs(pools, c.baseline_top_fraction, c.max_pairs);
      break;
    case Strategy::divpo:
      if (ctx.plan.logprobs_path.empty()) {
        pairs = pairing::select_divpo_pairs(pools, pairing::MockLogprobScorer(c.rng_seed), c.max_pairs);
      } else {
        pairs = pairing::select_divpo_pairs(pools, pairing::TableLogprobScorer::from_file(ctx.plan.logprobs_path),
                                            c.max_pairs);
      }
      break;
  }

  std::unordered_set<std::string> prompts_with_pairs;
  for (const auto& p : pairs) prompts_with_pairs.insert(p.prompt_id);
  ctx.manifest.surviving_pairs = write_jsonl(pairs, ctx.path(files::kPairs));
  ctx.manifest.unique_prompts = prompts_with_pairs.size();
  ctx.manifest.prompts_without_pairs = pools.size() - prompts_with_pairs.size();
}

void run_export(Context& ctx) {
  const auto pools = read_jsonl<PromptPool>(ctx.path(files::kPools));
  const auto pairs = read_jsonl<PreferencePair>(ctx.path(files::kPairs));
  ctx.manifest.exported_records =
      write_dpo_dataset(pairs, pools, ctx.config.export_format, ctx.path(files::kDataset));
}

void run_eval(Context& ctx) {
  const auto prompts = read_jsonl<PromptRecord>(ctx.plan.validation_path);
  const evalkit::ValidationClients vc{*ctx.clients.instruct, *ctx.clients.embedder, *ctx.clients.reward,
                                      *ctx.clients.judge};
  const auto result = evalkit::validation_metrics(vc, prompts, ctx.config.eval_k, ctx.config.decoding,
                                                  ctx.config.workers);
  write_file_atomic(ctx.path(files::kReport), evalkit::build_report(result, ctx.config).dump(2) + "\n");
}

// ---- stamps ----

struct StageIo {
  std::vector<std::string> inputs;   // file paths
  std::vector<std::string> outputs;  // file names in out_dir
  std::vector<std::string> config_keys;
  bool uses_endpoints = false;
};

StageIo stage_io(const Context& ctx, Stage stage) {
  using namespace files;
  auto p = [&](std::string_view name) { return ctx.path(name); };
  switch (stage) {
    case Stage::generate:
      return {{ctx.plan.prompts_path},
              {std::string(kPromptsSelected), std::string(kGenerations)},
              {"k", "rng_seed", "categories", "decoding", "mock", "endpoints"},
              true};
    case Stage::rewrite:
      return {{p(kPromptsSelected), p(kGenerations)},
              {std::string(kResponses)},
              {"include_base_raw", "mock", "endpoints"},
              true};
    case Stage::filter:
      return {{p(kPromptsSelected), p(kResponses)},
              {std::string(kScored), std::string(kStage1), std::string(kStage2), std::string(kStage3),
               std::string(kPoolsFiltered)},
              {"delta", "mean_after_safety", "rng_seed", "mock", "endpoints"},
              true};
    case Stage::diversity: {
      StageIo io{{p(kPoolsFiltered)},
                 {std::string(kPools), std::string(kDiversity)},
                 {"rng_seed", "mock", "endpoints"},
                 true};
      if (ctx.plan.dump_sim_matrix) io.outputs.emplace_back(kSimMatrix);
      return io;
    }
    case Stage::pair: {
      StageIo io{{p(kPools)},
                 {std::string(kPairs)},
                 {"epsilon", "alpha_percent", "pair_cap", "rng_seed", "strategy", "alpha_after_cap", "drop_zero_gap",
                  "baseline_top_fraction", "max_pairs"},
                 false};
      if (!ctx.plan.logprobs_path.empty()) io.inputs.push_back(ctx.plan.logprobs_path);
      return io;
    }
    case Stage::export_dataset:
      return {{p(kPools), p(kPairs)}, {std::string(kDataset)}, {"export_format"}, false};
    case Stage::eval:
      return {{ctx.plan.validation_path},
              {std::string(kReport)},
              {"rng_seed", "decoding", "eval", "mock", "endpoints"},
              true};
  }
  return {};
}

std::string file_hash(const std::string& path) { return sha256_hex(read_file(path)); }

std::string compute_stamp(const Context& ctx, Stage stage, const StageIo& io) {
  const ojson snapshot = config_snapshot(ctx.config);
  ojson basis;
  basis["stage"] = std::string(to_string(stage));
  ojson cfg = ojson::object();
  for (const auto& key : io.config_keys) cfg[key] = snapshot.at(key);
  basis["config"] = cfg;
  if (io.uses_endpoints) basis["force_mock"] = ctx.plan.force_mock;
  ojson inputs = ojson::array();
  for (const auto& in : io.inputs) inputs.push_back(file_hash(in));
  basis["inputs"] = inputs;
  return sha256_hex(basis.dump());
}

bool outputs_match(const Context& ctx, const ojson& recorded, const StageIo& io) {
  if (!recorded.contains("outputs")) return false;
  const auto& outs = recorded.at("outputs");
  for (const auto& name : io.outputs) {
    const std::string path = ctx.path(name);
    if (!fs::exists(path) || !outs.contains(name)) return false;
    if (outs.at(name).get<std::string>() != file_hash(path)) return false;
  }
  return true;
}

ojson load_json_or_empty(const std::string& path) {
  if (!fs::exists(path)) return ojson::object();
  try {
    return ojson::parse(read_file(path));
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable {}: {}", path, e.what());
    return ojson::object();
  }
}

void mark_completed(RunManifest& m, Stage stage) {
  std::set<int> done;
  for (const auto& name : m.completed_stages) done.insert(static_cast<int>(parse_stage(name)));
  done.insert(static_cast<int>(stage));
  m.completed_stages.clear();
  for (int s : done) m.completed_stages.emplace_back(to_string(static_cast<Stage>(s)));
}

}  // namespace

RunManifest run_pipeline(const RunPlan& plan, const PipelineConfig& config, Clients& clients) {
  validate(plan);
  validate(config);
  fs::create_directories(plan.out_dir);

  const std::string manifest_path = (fs::path(plan.out_dir) / files::kManifest).string();
  const std::string stamps_path = (fs::path(plan.out_dir) / files::kStamps).string();
  const bool fresh = plan.stages.front() == Stage::generate && !plan.resume;

  RunManifest manifest;
  if (!fresh && fs::exists(manifest_path)) manifest = read_manifest(manifest_path);
  manifest.failed_stage.reset();
  manifest.failure_message.reset();
  manifest.config = config_snapshot(config);
  ojson stamps = fresh ? ojson::object() : load_json_or_empty(stamps_path);
  ojson timings = ojson::object();

  Context ctx{plan, config, clients, manifest};
  for (Stage stage : plan.stages) {
    const std::string name(to_string(stage));
    const auto start = std::chrono::steady_clock::now();
    try {
      const StageIo io = stage_io(ctx, stage);
      const std::string stamp = compute_stamp(ctx, stage, io);
      if (plan.resume && stamps.contains(name) && stamps[name].value("stamp", "") == stamp &&
          outputs_match(ctx, stamps[name], io)) {
        spdlog::info("{}: up to date, skipped", name);
        mark_completed(manifest, stage);
        continue;
      }
      spdlog::info("{}: running", name);
      switch (stage) {
        case Stage::generate: run_generate(ctx); break;
        case Stage::rewrite: run_rewrite(ctx); break;
        case Stage::filter: run_filter(ctx); break;
        case Stage::diversity: run_diversity(ctx); break;
        case Stage::pair: run_pair(ctx); break;
        case Stage::export_dataset: run_export(ctx); break;
        case Stage::eval: run_eval(ctx); break;
      }
      ojson outputs = ojson::object();
      for (const auto& out : io.outputs) outputs[out] = file_hash(ctx.path(out));
      stamps[name] = ojson{{"stamp", stamp}, {"outputs", outputs}};
      mark_completed(manifest, stage);
    } catch (const std::exception& e) {
      spdlog::error("{} failed: {}", name, e.what());
      manifest.failed_stage = name;
      manifest.failure_message = e.what();
      stamps.erase(name);
      write_manifest(manifest, manifest_path);
      write_file_atomic(stamps_path, stamps.dump(2) + "\n");
      return manifest;
    }
    timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest(manifest, manifest_path);
    write_file_atomic(stamps_path, stamps.dump(2) + "\n");
  }
  write_file_atomic((fs::path(plan.out_dir) / files::kTimings).string(), timings.dump(2) + "\n");
  return manifest;
}

RunManifest run_pipeline(const RunPlan& plan, const PipelineConfig& config) {
  Clients clients = make_clients(config, plan.force_mock);
  return run_pipeline(plan, config, clients);
}

}  // namespace prefdata::pipeline
