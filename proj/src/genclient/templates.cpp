#include "prefdata/genclient/templates.hpp"

#include "prefdata/templates_data.hpp"

namespace prefdata::genclient {

std::string_view rewrite_template() { return detail::kRewritePrompt; }
std::string_view safety_template() { return detail::kSafetyPrompt; }
std::span<const std::string_view> diversity_system_prompts() { return detail::kDiversitySystemPrompts; }

std::string render_template(std::string_view tmpl, std::string_view prompt, std::string_view response) {
  static constexpr std::string_view kPrompt = "{prompt}";
  static constexpr std::string_view kResponse = "{response}";
  std::string out;
  out.reserve(tmpl.size() + prompt.size() + response.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.substr(i, kPrompt.size()) == kPrompt) {
      out += prompt;
      i += kPrompt.size();
    } else if (tmpl.substr(i, kResponse.size()) == kResponse) {
      out += response;
      i += kResponse.size();
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

}  // namespace prefdata::genclient
