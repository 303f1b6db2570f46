#pragma once

#include <string>
#include <string_view>

namespace prefdata::genclient {

// Drop a trailing incomplete sentence left by a max_tokens cutoff.
//
// A text counts as complete when, ignoring trailing whitespace, it ends in
// '.', '!' or '?' optionally followed by closing quotes or brackets. Otherwise
// everything after the last such sentence end is removed. A sentence end must
// be followed by whitespace (or the end of the text) so decimals such as "3.5"
// are not mistaken for one. Text with no sentence end at all is returned
// unchanged.
std::string cleanup_truncation(std::string_view text);

}  // namespace prefdata::genclient
