#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fedit {

/// True iff `bytes` is well-formed UTF-8 (no overlongs, surrogates or code
/// points above U+10FFFF).
bool is_valid_utf8(std::string_view bytes) noexcept;

/// The shared tokenizer: ASCII-lowercase, split on Unicode whitespace, strip
/// leading/trailing ASCII punctuation from each token, drop empties.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace fedit
