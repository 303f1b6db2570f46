#include "prefdata/jsonl.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace prefdata {

namespace {

using json = nlohmann::json;

const json& require(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw ValidationError(std::string("missing field ") + field);
  return *it;
}

std::string get_string(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_string()) throw ValidationError(std::string(field) + " must be a string");
  return v.get<std::string>();
}

std::optional<std::string> get_opt_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(std::string(field) + " must be a string");
  return it->get<std::string>();
}

double get_real(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number()) throw ValidationError(std::string(field) + " must be a number");
  return v.get<double>();
}

std::optional<double> get_opt_real(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ValidationError(std::string(field) + " must be a number");
  return it->get<double>();
}

std::size_t get_count(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ValidationError(std::string(field) + " must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

template <typename Enum, typename Parse>
Enum get_enum(const json& j, const char* field, Parse parse) {
  const std::string s = get_string(j, field);
  try {
    return parse(s);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string(field) + ": " + e.what());
  }
}

}  // namespace

ojson to_json(const ResponseRecord& r) {
  ojson j;
  j["response_id"] = r.response_id;
  j["prompt_id"] = r.prompt_id;
  j["origin"] = std::string(to_string(r.origin));
  j["sample_index"] = r.sample_index;
  if (r.parent_id) j["parent_id"] = *r.parent_id;
  j["text"] = r.text;
  if (r.safety_label) j["safety_label"] = std::string(to_string(*r.safety_label));
  if (r.if_score) j["if_score"] = *r.if_score;
  if (r.diversity_score) j["diversity_score"] = *r.diversity_score;
  if (r.embedding_ref) j["embedding_ref"] = *r.embedding_ref;
  return j;
}

void from_json(const json& j, ResponseRecord& r) {
  r.response_id = get_string(j, "response_id");
  r.prompt_id = get_string(j, "prompt_id");
  r.origin = get_enum<Origin>(j, "origin", parse_origin);
  {
    const json& v = require(j, "sample_index");
    if (!v.is_number_integer()) throw ValidationError("sample_index must be an integer");
    r.sample_index = v.get<int>();
  }
  r.parent_id = get_opt_string(j, "parent_id");
  r.text = get_string(j, "text");
  if (auto s = get_opt_string(j, "safety_label")) {
    try {
      r.safety_label = parse_safety_label(*s);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(std::string("safety_label: ") + e.what());
    }
  } else {
    r.safety_label.reset();
  }
  r.if_score = get_opt_real(j, "if_score");
  r.diversity_score = get_opt_real(j, "diversity_score");
  r.embedding_ref = get_opt_string(j, "embedding_ref");
  validate(r);
}

ojson to_json(const PromptRecord& r) {
  ojson j;
  j["prompt_id"] = r.prompt_id;
  j["prompt_text"] = r.prompt_text;
  j["category"] = std::string(to_string(r.category));
  return j;
}

void from_json(const json& j, PromptRecord& r) {
  r.prompt_id = get_string(j, "prompt_id");
  r.prompt_text = get_string(j, "prompt_text");
  r.category = j.contains("category") ? parse_category(get_string(j, "category")) : Category::other;
  validate(r);
}

ojson to_json(const PromptPool& p) {
  ojson j;
  j["prompt_id"] = p.prompt_id;
  j["prompt_text"] = p.prompt_text;
  j["category"] = std::string(to_string(p.category));
  if (p.instruct_mean_if) j["instruct_mean_if"] = *p.instruct_mean_if;
  if (p.filtered_through) j["filtered_through"] = std::string(to_string(*p.filtered_through));
  ojson responses = ojson::array();
  for (const auto& r : p.responses) responses.push_back(to_json(r));
  j["responses"] = std::move(responses);
  return j;
}

void from_json(const json& j, PromptPool& p) {
  p.prompt_id = get_string(j, "prompt_id");
  p.prompt_text = get_string(j, "prompt_text");
  p.category = j.contains("category") ? parse_category(get_string(j, "category")) : Category::other;
  p.instruct_mean_if = get_opt_real(j, "instruct_mean_if");
  if (auto s = get_opt_string(j, "filtered_through")) {
    try {
      p.filtered_through = parse_filter_stage(*s);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(std::string("filtered_through: ") + e.what());
    }
  } else {
    p.filtered_through.reset();
  }
  const json& rs = require(j, "responses");
  if (!rs.is_array()) throw ValidationError("responses must be an array");
  p.responses.clear();
  p.responses.reserve(rs.size());
  for (const auto& rj : rs) {
    ResponseRecord r;
    try {
      from_json(rj, r);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("responses: ") + e.what());
    }
    p.responses.push_back(std::move(r));
  }
  validate(p);
}

ojson to_json(const PreferencePair& p) {
  ojson j;
  j["prompt_id"] = p.prompt_id;
  j["chosen_id"] = p.chosen_id;
  j["rejected_id"] = p.rejected_id;
  j["reward_gap"] = p.reward_gap;
  j["diversity_gap"] = p.diversity_gap;
  j["strategy"] = std::string(to_string(p.strategy));
  return j;
}

void from_json(const json& j, PreferencePair& p) {
  p.prompt_id = get_string(j, "prompt_id");
  p.chosen_id = get_string(j, "chosen_id");
  p.rejected_id = get_string(j, "rejected_id");
  p.reward_gap = get_real(j, "reward_gap");
  p.diversity_gap = get_real(j, "diversity_gap");
  p.strategy = get_enum<Strategy>(j, "strategy", parse_strategy);
  validate(p);
}

ojson to_json(const FilterSummary& s) {
  ojson j;
  j["stage"] = std::string(to_string(s.stage));
  j["input_responses"] = s.input_responses;
  j["removed_responses"] = s.removed_responses;
  j["surviving_responses"] = s.surviving_responses;
  j["removed_prompts"] = s.removed_prompts;
  j["removed_prompt_ids"] = s.removed_prompt_ids;
  return j;
}

void from_json(const json& j, FilterSummary& s) {
  s.stage = get_enum<FilterStage>(j, "stage", parse_filter_stage);
  s.input_responses = get_count(j, "input_responses");
  s.removed_responses = get_count(j, "removed_responses");
  s.surviving_responses = get_count(j, "surviving_responses");
  s.removed_prompts = get_count(j, "removed_prompts");
  s.removed_prompt_ids = require(j, "removed_prompt_ids").get<std::vector<std::string>>();
}

ojson to_json(const RunManifest& m) {
  ojson j;
  j["prompts_loaded"] = m.prompts_loaded;
  j["prompts_skipped_category"] = m.prompts_skipped_category;
  j["initial_generations"] = m.initial_generations;
  j["rewrites_added"] = m.rewrites_added;
  j["rewrite_dropped"] = m.rewrite_dropped;
  j["safety_removed"] = m.safety_removed;
  j["quality_removed"] = m.quality_removed;
  j["prompts_removed_quality"] = m.prompts_removed_quality;
  j["prompts_removed_min_samples"] = m.prompts_removed_min_samples;
  j["min_samples_responses_removed"] = m.min_samples_responses_removed;
  j["responses_entering_pairing"] = m.responses_entering_pairing;
  j["surviving_pairs"] = m.surviving_pairs;
  j["unique_prompts"] = m.unique_prompts;
  j["prompts_without_pairs"] = m.prompts_without_pairs;
  j["exported_records"] = m.exported_records;
  ojson outcomes = ojson::array();
  for (const auto& s : m.filter_outcomes) outcomes.push_back(to_json(s));
  j["filter_outcomes"] = std::move(outcomes);
  j["completed_stages"] = m.completed_stages;
  if (m.failed_stage) j["failed_stage"] = *m.failed_stage;
  if (m.failure_message) j["failure_message"] = *m.failure_message;
  j["config"] = m.config;
  return j;
}

void from_json(const json& j, RunManifest& m) {
  m.prompts_loaded = get_count(j, "prompts_loaded");
  m.prompts_skipped_category = get_count(j, "prompts_skipped_category");
  m.initial_generations = get_count(j, "initial_generations");
  m.rewrites_added = get_count(j, "rewrites_added");
  m.rewrite_dropped = get_count(j, "rewrite_dropped");
  m.safety_removed = get_count(j, "safety_removed");
  m.quality_removed = get_count(j, "quality_removed");
  m.prompts_removed_quality = get_count(j, "prompts_removed_quality");
  m.prompts_removed_min_samples = get_count(j, "prompts_removed_min_samples");
  m.min_samples_responses_removed = get_count(j, "min_samples_responses_removed");
  m.responses_entering_pairing = get_count(j, "responses_entering_pairing");
  m.surviving_pairs = get_count(j, "surviving_pairs");
  m.unique_prompts = get_count(j, "unique_prompts");
  m.prompts_without_pairs = get_count(j, "prompts_without_pairs");
  m.exported_records = get_count(j, "exported_records");
  m.filter_outcomes.clear();
  for (const auto& s : require(j, "filter_outcomes")) {
    FilterSummary fs;
    from_json(s, fs);
    m.filter_outcomes.push_back(std::move(fs));
  }
  m.completed_stages = require(j, "completed_stages").get<std::vector<std::string>>();
  m.failed_stage = get_opt_string(j, "failed_stage");
  m.failure_message = get_opt_string(j, "failure_message");
  m.config = ojson::parse(require(j, "config").dump());
}

bool RunManifest::reconciles() const {
  const std::size_t removed =
      rewrite_dropped + safety_removed + quality_removed + min_samples_responses_removed;
  const std::size_t entered = initial_generations + rewrites_added;
  if (removed > entered) return false;
  if (entered - removed != responses_entering_pairing) return false;
  for (const auto& s : filter_outcomes) {
    if (s.input_responses != s.removed_responses + s.surviving_responses) return false;
  }
  return true;
}

std::string encode_line(const ojson& j) { return j.dump(); }

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory for " + path + ": " + ec.message());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + path);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path);
  return ss.str();
}

namespace detail {
void check_unique_ids(std::span<const ResponseRecord> records) {
  std::unordered_set<std::string_view> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.response_id).second) throw ValidationError("response_id duplicated: " + r.response_id);
  }
}
}  // namespace detail

RunManifest read_manifest(const std::string& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(1, path + ": " + e.what());
  }
  RunManifest m;
  from_json(j, m);
  return m;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  write_file_atomic(path, to_json(manifest).dump(2) + "\n");
}

}  // namespace prefdata
