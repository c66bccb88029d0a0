#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stf/patterns.hpp"

#include <cmath>
#include <fstream>

using namespace stf;

TEST_CASE("civil time arithmetic") {
  SUBCASE("known weekdays") {
    CHECK(civil_from_minutes(minutes_from_civil(1970, 1, 1)).weekday == 3);   // Thursday
    CHECK(civil_from_minutes(minutes_from_civil(2024, 1, 1)).weekday == 0);   // Monday
    CHECK(civil_from_minutes(minutes_from_civil(2018, 11, 21)).weekday == 2); // Wednesday
  }
  SUBCASE("round trips through civil fields") {
    for (TimestampMinutes t = minutes_from_civil(2021, 12, 28); t < minutes_from_civil(2022, 1, 3);
         t += 137) {
      const CivilTime c = civil_from_minutes(t);
      CHECK(minutes_from_civil(c.year, c.month, c.day, c.hour, c.minute) == t);
    }
  }
  SUBCASE("format and parse round trip") {
    const TimestampMinutes t = minutes_from_civil(2024, 7, 9, 16, 5);
    CHECK(format_timestamp(t) == "2024-07-09 16:05");
    CHECK(parse_timestamp("2024-07-09 16:05") == t);
    CHECK(parse_timestamp("2024-07-09T16:05") == t);
    CHECK(parse_date("2024-07-09") == minutes_from_civil(2024, 7, 9));
  }
}

TEST_CASE("pattern assignment") {
  PatternCalendar cal;
  SUBCASE("Tuesday morning peak") {
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 2, 7, 30), cal) == 3);
  }
  SUBCASE("Saturday") {
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 6, 13, 0), cal) == 15);
  }
  SUBCASE("Sunday") {
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 7, 8, 0), cal) == 16);
  }
  SUBCASE("a public holiday on a Wednesday counts as Sunday") {
    cal.holidays.insert(minutes_from_civil(2024, 1, 3) / (24 * 60));
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 3, 10, 0), cal) == 16);
  }
  SUBCASE("half-open peak boundaries") {
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 1, 6, 0), cal) == 0);   // Monday AM start
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 1, 9, 0), cal) == 1);   // AM end is off
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 5, 21, 59), cal) == 14);
    CHECK(assign_pattern(minutes_from_civil(2024, 1, 5, 22, 0), cal) == 13);
  }
  SUBCASE("workday flag excludes weekends and holidays") {
    cal.holidays.insert(minutes_from_civil(2024, 1, 3) / (24 * 60));
    CHECK(cal.is_workday(minutes_from_civil(2024, 1, 2, 12, 0)));
    CHECK_FALSE(cal.is_workday(minutes_from_civil(2024, 1, 3, 12, 0)));  // holiday
    CHECK_FALSE(cal.is_workday(minutes_from_civil(2024, 1, 6, 12, 0)));  // Saturday
    CHECK_FALSE(cal.is_workday(minutes_from_civil(2024, 1, 7, 12, 0)));  // Sunday
  }
}

TEST_CASE("a simulated year partitions into the 17 ids") {
  PatternCalendar cal;
  cal.holidays.insert(minutes_from_civil(2024, 1, 1) / (24 * 60));
  cal.holidays.insert(minutes_from_civil(2024, 12, 25) / (24 * 60));
  int seen[17] = {0};
  for (TimestampMinutes t = minutes_from_civil(2024, 1, 1); t < minutes_from_civil(2025, 1, 1);
       t += 15) {
    const int id = assign_pattern(t, cal);
    REQUIRE(id >= 0);
    REQUIRE(id < 17);
    ++seen[id];
    const CivilTime c = civil_from_minutes(t);
    if (cal.is_holiday(t)) {
      CHECK(id == 16);
    } else if (c.weekday == 5) {
      CHECK(id == 15);
    } else if (c.weekday == 6) {
      CHECK(id == 16);
    } else {
      CHECK(id / 3 == c.weekday);
    }
  }
  for (int id = 0; id < 17; ++id) CHECK(seen[id] > 0);

  // Monday..Friday segments cover each day exactly once
  for (int weekday = 0; weekday < 5; ++weekday) {
    // 2024-01-01 is a Monday
    const TimestampMinutes day = minutes_from_civil(2024, 1, 8 + weekday);
    for (int minute = 0; minute < 24 * 60; ++minute) {
      const int id = assign_pattern(day + minute, cal);
      const bool am = minute >= cal.am_start && minute < cal.am_end;
      const bool pm = minute >= cal.pm_start && minute < cal.pm_end;
      CHECK(id == 3 * weekday + (am ? 0 : pm ? 2 : 1));
    }
  }
}

TEST_CASE("one-hot membership") {
  SUBCASE("rows are unit vectors at the ids") {
    Tensor w = one_hot_membership({3, 15, 16});
    CHECK(w.shape() == Shape{3, 17});
    for (int j = 0; j < 3; ++j) {
      double sum = 0.0;
      for (int p = 0; p < 17; ++p) sum += w.at(j * 17 + p);
      CHECK(sum == 1.0);
    }
    CHECK(w.at(0 * 17 + 3) == 1.0);
    CHECK(w.at(1 * 17 + 15) == 1.0);
    CHECK(w.at(2 * 17 + 16) == 1.0);
  }
  SUBCASE("equal ids give identical rows") {
    Tensor w = one_hot_membership({5, 5});
    for (int p = 0; p < 17; ++p) CHECK(w.at(p) == w.at(17 + p));
  }
  SUBCASE("out-of-range ids are rejected") {
    CHECK_THROWS_AS((void)one_hot_membership({17}), std::invalid_argument);
    CHECK_THROWS_AS((void)one_hot_membership({-1}), std::invalid_argument);
  }
}

TEST_CASE("prototype bank initialization") {
  SUBCASE("shape and learnability") {
    Tensor bank = init_prototypes(4, 3, 2, 7);
    CHECK(bank.shape() == Shape{17, 4, 3, 2});
    CHECK(bank.requires_grad());
  }
  SUBCASE("same seed reproduces bit-identical values") {
    Tensor a = init_prototypes(2, 3, 4, 123);
    Tensor b = init_prototypes(2, 3, 4, 123);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
  }
  SUBCASE("sample deviation is near 0.02") {
    Tensor bank = init_prototypes(10, 10, 8, 99);  // 13600 entries
    REQUIRE(bank.numel() >= 10000);
    const double mean = bank.values().mean();
    const double var = (bank.values() - mean).square().sum() /
                       static_cast<double>(bank.numel() - 1);
    const double sd = std::sqrt(var);
    CHECK(sd > 0.02 * 0.8);
    CHECK(sd < 0.02 * 1.2);
  }
}

TEST_CASE("holiday file parsing") {
  const std::string path = "/tmp/holidays_test.txt";
  {
    std::ofstream out(path);
    out << "# national holidays\n2024-01-01\n2024-12-25\n\n";
  }
  auto days = load_holidays(path);
  CHECK(days.size() == 2);
  CHECK(days.count(minutes_from_civil(2024, 1, 1) / (24 * 60)) == 1);
  CHECK(days.count(minutes_from_civil(2024, 12, 25) / (24 * 60)) == 1);
}
