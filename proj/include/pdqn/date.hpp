#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace pdqn {

/// Calendar date stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  /// Parses `YYYY-MM-DD`; throws ParseError otherwise.
  static Date parse(std::string_view text);

  std::string iso() const;
  constexpr std::chrono::sys_days sys_days() const { return days_; }
  constexpr long serial() const { return days_.time_since_epoch().count(); }

  Date plus_days(long n) const { return Date{days_ + std::chrono::days{n}}; }
  bool is_weekend() const;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

}  // namespace pdqn
