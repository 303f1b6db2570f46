#pragma once

#include <span>
#include <string>
#include <string_view>

namespace prefdata::genclient {

std::string_view rewrite_template();
std::string_view safety_template();
// The three diversity-eliciting system prompts, in order.
std::span<const std::string_view> diversity_system_prompts();

// Single-pass substitution of {prompt} and {response}; substituted text is not
// rescanned.
std::string render_template(std::string_view tmpl, std::string_view prompt, std::string_view response);

}  // namespace prefdata::genclient
