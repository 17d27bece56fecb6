#include "fedit/text.hpp"

#include <cctype>
#include <cstdint>
#include <optional>

namespace fedit {
namespace {

struct Decoded {
  char32_t code_point;
  std::size_t length;
};

std::optional<Decoded> decode_one(std::string_view s, std::size_t pos) noexcept {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
  const unsigned char lead = byte(pos);
  if (lead < 0x80) return Decoded{lead, 1};

  std::size_t len;
  char32_t cp;
  char32_t min;
  if ((lead & 0xE0) == 0xC0) {
    len = 2, cp = lead & 0x1F, min = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3, cp = lead & 0x0F, min = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4, cp = lead & 0x07, min = 0x10000;
  } else {
    return std::nullopt;
  }
  if (pos + len > s.size()) return std::nullopt;
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  return Decoded{cp, len};
}

// Unicode White_Space property.
bool is_unicode_space(char32_t cp) noexcept {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

void flush_token(std::string& current, std::vector<std::string>& out) {
  std::size_t b = 0;
  std::size_t e = current.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(current[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(current[e - 1]))) --e;
  if (e > b) out.emplace_back(current.substr(b, e - b));
  current.clear();
}

}  // namespace

bool is_valid_utf8(std::string_view bytes) noexcept {
  for (std::size_t pos = 0; pos < bytes.size();) {
    auto d = decode_one(bytes, pos);
    if (!d) return false;
    pos += d->length;
  }
  return true;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t pos = 0; pos < text.size();) {
    auto d = decode_one(text, pos);
    // Malformed bytes are kept verbatim; ingestion already rejects them.
    const std::size_t len = d ? d->length : 1;
    if (d && is_unicode_space(d->code_point)) {
      flush_token(current, out);
    } else if (len == 1) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[pos]))));
    } else {
      current.append(text.substr(pos, len));
    }
    pos += len;
  }
  flush_token(current, out);
  return out;
}

}  // namespace fedit
