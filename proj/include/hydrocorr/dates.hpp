#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace hydrocorr {

// Calendar date stored as days since 1970-01-01 (proleptic Gregorian).
struct Date {
  std::int32_t days = 0;

  static Date from_civil(int year, int month, int day);
  // Parses strict ISO-8601 "YYYY-MM-DD"; throws InvalidInput otherwise.
  static Date parse(const std::string& iso);

  std::string to_string() const;

  auto operator<=>(const Date&) const = default;
};

inline int days_between(Date a, Date b) { return b.days - a.days; }

inline Date operator+(Date d, int n) { return Date{d.days + n}; }

}  // namespace hydrocorr
