#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>

#include "concise/text.hpp"

namespace concise {

/// Content of the last brace-balanced \boxed{...}; otherwise the trimmed
/// first line.
inline std::string extract_answer(std::string_view raw) {
  constexpr std::string_view kBox = "\\boxed{";
  std::optional<std::string> last;
  for (std::size_t at = raw.find(kBox); at != std::string_view::npos; at = raw.find(kBox, at + 1)) {
    std::size_t depth = 1;
    std::size_t i = at + kBox.size();
    for (; i < raw.size() && depth > 0; ++i) {
      if (raw[i] == '{') ++depth;
      if (raw[i] == '}') --depth;
    }
    if (depth == 0) {
      const std::size_t begin = at + kBox.size();
      last = std::string(raw.substr(begin, i - 1 - begin));
    }
  }
  if (last) return *last;
  const std::size_t nl = raw.find('\n');
  return std::string(text::trim(raw.substr(0, nl)));
}

namespace detail {

struct Number {
  bool exact = false;  // integer or integer fraction
  __int128 num = 0;
  __int128 den = 1;
  double value = 0.0;
};

inline std::optional<__int128> parse_int(std::string_view s) {
  s = text::trim(s);
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  if (s.empty() || s.size() > 30) return std::nullopt;
  __int128 v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return neg ? -v : v;
}

inline std::optional<double> parse_decimal(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  if (s[i] == '-' || s[i] == '+') ++i;
  bool digits = false;
  bool dot = false;
  for (; i < s.size(); ++i) {
    if (s[i] >= '0' && s[i] <= '9') {
      digits = true;
    } else if (s[i] == '.' && !dot) {
      dot = true;
    } else {
      return std::nullopt;
    }
  }
  if (!digits) return std::nullopt;
  return std::strtod(std::string(s).c_str(), nullptr);
}

inline std::optional<Number> make_fraction(__int128 n, __int128 d) {
  if (d == 0) return std::nullopt;
  if (d < 0) {
    n = -n;
    d = -d;
  }
  return Number{true, n, d, static_cast<double>(n) / static_cast<double>(d)};
}

inline std::optional<Number> parse_number(std::string_view s) {
  s = text::trim(s);
  if (auto i = parse_int(s)) return Number{true, *i, 1, static_cast<double>(*i)};

  // \frac{a}{b}, \dfrac{a}{b}, \tfrac{a}{b}, optionally negated
  std::string_view body = s;
  bool neg = false;
  if (!body.empty() && body[0] == '-') {
    neg = true;
    body.remove_prefix(1);
  }
  for (std::string_view cmd : {"\\frac{", "\\dfrac{", "\\tfrac{"}) {
    if (body.substr(0, cmd.size()) != cmd) continue;
    const std::size_t mid = body.find("}{", cmd.size());
    if (mid == std::string_view::npos || body.back() != '}') return std::nullopt;
    auto n = parse_int(body.substr(cmd.size(), mid - cmd.size()));
    auto d = parse_int(body.substr(mid + 2, body.size() - mid - 3));
    if (!n || !d) return std::nullopt;
    return make_fraction(neg ? -*n : *n, *d);
  }

  if (const std::size_t slash = s.find('/'); slash != std::string_view::npos) {
    auto n = parse_int(s.substr(0, slash));
    auto d = parse_int(s.substr(slash + 1));
    if (n && d) return make_fraction(*n, *d);
    return std::nullopt;
  }

  if (auto d = parse_decimal(s)) return Number{false, 0, 1, *d};
  return std::nullopt;
}

inline std::string normalize_answer(std::string_view raw) {
  std::string a = extract_answer(raw);
  std::string_view v = text::trim(a);
  while (v.size() >= 2 && v.front() == '$' && v.back() == '$') {
    v = text::trim(v.substr(1, v.size() - 2));
  }
  return std::string(v);
}

}  // namespace detail

/// Normalized equality: both sides go through extract_answer, whitespace
/// and enclosing '$' are stripped, then exact string match; failing that,
/// numeric equality (integer fractions exactly, decimals within 1e-9).
inline bool verify_answer(std::string_view candidate, std::string_view ground_truth) {
  const std::string a = detail::normalize_answer(candidate);
  const std::string b = detail::normalize_answer(ground_truth);
  if (a == b) return !a.empty();
  const auto x = detail::parse_number(a);
  const auto y = detail::parse_number(b);
  if (!x || !y) return false;
  if (x->exact && y->exact) return x->num * y->den == y->num * x->den;
  return std::fabs(x->value - y->value) <= 1e-9;
}

}  // namespace concise
