#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace deltalag {

// Calendar day, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days d) : days_(d.time_since_epoch().count()) {}

  // Parses YYYY-MM-DD; throws ParseError on anything else.
  static Date parse(std::string_view iso);
  static Date from_ymd(int year, unsigned month, unsigned day);

  std::string iso() const;
  int serial() const { return days_; }
  std::chrono::sys_days sys_days() const {
    return std::chrono::sys_days{std::chrono::days{days_}};
  }
  bool is_weekend() const;
  Date next_business_day() const;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  int days_ = 0;
};

}  // namespace deltalag
