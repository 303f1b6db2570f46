#include <unordered_map>

#include "prefdata/pipeline.hpp"

namespace prefdata::pipeline {

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

ojson message(std::string_view role, const std::string& content) {
  return ojson::array({ojson{{"role", role}, {"content", content}}});
}

}  // namespace

DanglingReferenceError::DanglingReferenceError(std::vector<std::string> ids)
    : std::runtime_error("pairs reference responses that are not in the pools: " + join_ids(ids)),
      ids_(std::move(ids)) {}

std::vector<ojson> export_dpo_dataset(std::span<const PreferencePair> pairs, std::span<const PromptPool> pools,
                                      ExportFormat format) {
  std::unordered_map<std::string_view, const PromptPool*> by_prompt;
  for (const auto& pool : pools) by_prompt.emplace(pool.prompt_id, &pool);

  std::vector<std::string> missing;
  auto lookup = [&](const PromptPool* pool, const std::string& id) -> const ResponseRecord* {
    const ResponseRecord* r = pool ? pool->find(id) : nullptr;
    if (!r) missing.push_back(id);
    return r;
  };

  std::vector<ojson> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto it = by_prompt.find(p.prompt_id);
    const PromptPool* pool = it == by_prompt.end() ? nullptr : it->second;
    const ResponseRecord* chosen = lookup(pool, p.chosen_id);
    const ResponseRecord* rejected = lookup(pool, p.rejected_id);
    if (!chosen || !rejected) continue;
    if (format == ExportFormat::flat_jsonl) {
      out.push_back(ojson{{"prompt", pool->prompt_text}, {"chosen", chosen->text}, {"rejected", rejected->text}});
    } else {
      out.push_back(ojson{{"prompt", message("user", pool->prompt_text)},
                          {"chosen", message("assistant", chosen->text)},
                          {"rejected", message("assistant", rejected->text)}});
    }
  }
  if (!missing.empty()) throw DanglingReferenceError(std::move(missing));
  return out;
}

std::size_t write_dpo_dataset(std::span<const PreferencePair> pairs, std::span<const PromptPool> pools,
                              ExportFormat format, const std::string& path) {
  const auto records = export_dpo_dataset(pairs, pools, format);
  std::string text;
  for (const auto& r : records) {
    text += encode_line(r);
    text += '\n';
  }
  write_file_atomic(path, text);
  return records.size();
}

}  // namespace prefdata::pipeline
