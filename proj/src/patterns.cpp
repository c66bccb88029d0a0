#include "stf/patterns.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace stf {

namespace {

constexpr std::int64_t kMinutesPerDay = 24 * 60;

// days-from-civil / civil-from-days on the proleptic Gregorian calendar
// (Howard Hinnant's algorithms), epoch 1970-01-01
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

}  // namespace

CivilTime civil_from_minutes(TimestampMinutes m) {
  const std::int64_t days = floor_div(m, kMinutesPerDay);
  const int minute_of_day = static_cast<int>(m - days * kMinutesPerDay);
  CivilTime c;
  civil_from_days(days, c.year, c.month, c.day);
  c.hour = minute_of_day / 60;
  c.minute = minute_of_day % 60;
  c.weekday = static_cast<int>(((days + 3) % 7 + 7) % 7);  // 1970-01-01 was a Thursday
  return c;
}

TimestampMinutes minutes_from_civil(int year, int month, int day, int hour, int minute) {
  return days_from_civil(year, month, day) * kMinutesPerDay + hour * 60 + minute;
}

std::string format_timestamp(TimestampMinutes m) {
  const CivilTime c = civil_from_minutes(m);
  char buffer[20];
  std::snprintf(buffer, sizeof(buffer), "%04d-%02d-%02d %02d:%02d", c.year, c.month, c.day,
                c.hour, c.minute);
  return buffer;
}

TimestampMinutes parse_timestamp(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d", &y, &mo, &d, &h, &mi) == 5 ||
      std::sscanf(s.c_str(), "%d-%d-%dT%d:%d", &y, &mo, &d, &h, &mi) == 5) {
    return minutes_from_civil(y, mo, d, h, mi);
  }
  throw std::invalid_argument("timestamp: cannot parse '" + s + "' (want YYYY-MM-DD HH:MM)");
}

TimestampMinutes parse_date(const std::string& s) {
  int y = 0, mo = 0, d = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &mo, &d) == 3) {
    return minutes_from_civil(y, mo, d);
  }
  throw std::invalid_argument("date: cannot parse '" + s + "' (want YYYY-MM-DD)");
}

bool PatternCalendar::is_holiday(TimestampMinutes t) const {
  return holidays.count(floor_div(t, kMinutesPerDay)) > 0;
}

bool PatternCalendar::is_workday(TimestampMinutes t) const {
  if (is_holiday(t)) return false;
  return civil_from_minutes(t).weekday < 5;
}

std::set<std::int64_t> load_holidays(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("holidays: cannot open " + path);
  std::set<std::int64_t> days;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t\r");
    days.insert(floor_div(parse_date(line.substr(begin, end - begin + 1)), kMinutesPerDay));
  }
  return days;
}

int assign_pattern(TimestampMinutes start, const PatternCalendar& calendar) {
  if (calendar.is_holiday(start)) return PatternCalendar::kSunday;
  const CivilTime c = civil_from_minutes(start);
  if (c.weekday == 5) return PatternCalendar::kSaturday;
  if (c.weekday == 6) return PatternCalendar::kSunday;
  const int minute_of_day = c.hour * 60 + c.minute;
  int segment = 1;  // off hours
  if (minute_of_day >= calendar.am_start && minute_of_day < calendar.am_end) {
    segment = 0;
  } else if (minute_of_day >= calendar.pm_start && minute_of_day < calendar.pm_end) {
    segment = 2;
  }
  return 3 * c.weekday + segment;
}

Tensor one_hot_membership(const std::vector<int>& ids) {
  const auto b = static_cast<std::int64_t>(ids.size());
  std::vector<double> w(static_cast<std::size_t>(b * PatternCalendar::kPatternCount), 0.0);
  for (std::int64_t j = 0; j < b; ++j) {
    const int id = ids[static_cast<std::size_t>(j)];
    if (id < 0 || id >= PatternCalendar::kPatternCount) {
      throw std::invalid_argument("one_hot_membership: pattern id " + std::to_string(id) +
                                  " out of range [0,17)");
    }
    w[static_cast<std::size_t>(j * PatternCalendar::kPatternCount + id)] = 1.0;
  }
  return Tensor::from_data({b, PatternCalendar::kPatternCount}, std::move(w));
}

Tensor init_prototypes(std::int64_t window_steps, std::int64_t nodes, std::int64_t width,
                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  const Shape shape{PatternCalendar::kPatternCount, window_steps, nodes, width};
  std::vector<double> values(static_cast<std::size_t>(numel_of(shape)));
  for (double& v : values) v = dist(rng);
  return Tensor::from_data(shape, std::move(values), true);
}

}  // namespace stf
