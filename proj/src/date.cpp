#include "deltalag/date.hpp"

#include <charconv>
#include <cstdio>

#include "deltalag/errors.hpp"

namespace deltalag {

namespace {

int parse_int(std::string_view s, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError("invalid date '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

Date Date::parse(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw ParseError("invalid date '" + std::string(iso) + "', expected YYYY-MM-DD");
  }
  const int y = parse_int(iso.substr(0, 4), iso);
  const int m = parse_int(iso.substr(5, 2), iso);
  const int d = parse_int(iso.substr(8, 2), iso);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw ParseError("invalid calendar date '" + std::string(iso) + "'");
  }
  return Date(std::chrono::sys_days{ymd});
}

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok()) {
    throw ParseError("invalid calendar date");
  }
  return Date(std::chrono::sys_days{ymd});
}

std::string Date::iso() const {
  const std::chrono::year_month_day ymd{sys_days()};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

bool Date::is_weekend() const {
  const std::chrono::weekday wd{sys_days()};
  return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

Date Date::next_business_day() const {
  Date d(sys_days() + std::chrono::days{1});
  while (d.is_weekend()) {
    d = Date(d.sys_days() + std::chrono::days{1});
  }
  return d;
}

}  // namespace deltalag
