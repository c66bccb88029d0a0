#pragma once

#include "stf/tensor.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace stf {

/// Minutes since 1970-01-01 00:00. All times are naive local times.
using TimestampMinutes = std::int64_t;

struct CivilTime {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31
  int hour = 0;
  int minute = 0;
  int weekday = 0;  // 0 = Monday .. 6 = Sunday
};

CivilTime civil_from_minutes(TimestampMinutes m);
TimestampMinutes minutes_from_civil(int year, int month, int day, int hour = 0,
                                    int minute = 0);
std::string format_timestamp(TimestampMinutes m);         // "YYYY-MM-DD HH:MM"
TimestampMinutes parse_timestamp(const std::string& s);   // same form, 'T' also accepted
TimestampMinutes parse_date(const std::string& s);        // "YYYY-MM-DD" -> midnight

/// The 17-way partition of start times:
///   id = 3*weekday + segment for Monday..Friday, with segment 0 = morning
///   peak, 1 = off hours, 2 = evening peak; 15 = Saturday; 16 = Sunday.
/// Public holidays map to 16 regardless of weekday. Peak windows are
/// half-open [start, end) minutes of the day and configurable.
struct PatternCalendar {
  int am_start = 6 * 60;
  int am_end = 9 * 60;
  int pm_start = 16 * 60;
  int pm_end = 22 * 60;
  std::set<std::int64_t> holidays;  // day numbers (minutes / 1440)

  static constexpr int kPatternCount = 17;
  static constexpr int kSaturday = 15;
  static constexpr int kSunday = 16;

  bool is_holiday(TimestampMinutes t) const;
  /// Non-holiday Monday..Friday. The complex-time evaluation slice keys off
  /// this.
  bool is_workday(TimestampMinutes t) const;
};

/// Reads one ISO date (YYYY-MM-DD) per line; '#' comments and blanks allowed.
std::set<std::int64_t> load_holidays(const std::string& path);

int assign_pattern(TimestampMinutes start, const PatternCalendar& calendar);

/// (B, 17) matrix with row j = e_{ids[j]}.
Tensor one_hot_membership(const std::vector<int>& ids);

/// Learnable prototype bank of shape (17, window_steps, nodes, width),
/// initialized from N(0, 0.02^2).
Tensor init_prototypes(std::int64_t window_steps, std::int64_t nodes, std::int64_t width,
                       std::uint64_t seed);

}  // namespace stf
