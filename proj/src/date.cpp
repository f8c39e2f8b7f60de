#include "pdqn/date.hpp"

#include <charconv>
#include <cstdio>

#include "pdqn/errors.hpp"

namespace pdqn {

using namespace std::chrono;

Date::Date(int y, unsigned m, unsigned d) {
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) {
    throw ParseError("invalid calendar date " + std::to_string(y) + "-" +
                     std::to_string(m) + "-" + std::to_string(d));
  }
  days_ = std::chrono::sys_days{ymd};
}

namespace {

template <typename T>
bool parse_digits(std::string_view s, T& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

Date Date::parse(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
      !parse_digits(text.substr(0, 4), y) ||
      !parse_digits(text.substr(5, 2), m) ||
      !parse_digits(text.substr(8, 2), d)) {
    throw ParseError("expected ISO-8601 date YYYY-MM-DD, got '" +
                     std::string(text) + "'");
  }
  return Date{y, m, d};
}

std::string Date::iso() const {
  const year_month_day ymd{days_};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

bool Date::is_weekend() const {
  const weekday wd{days_};
  return wd == Saturday || wd == Sunday;
}

}  // namespace pdqn
