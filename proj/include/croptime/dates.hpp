#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace croptime {

using Date = std::chrono::sys_days;

// Throws ParseError on anything that is not a valid YYYY-MM-DD date.
Date parse_iso_date(const std::string& text);

std::string format_iso_date(Date d);

int date_year(Date d);

// 1-based day within the calendar year (Jan 1 -> 1).
int day_of_year(Date d);

// Strictly increasing acquisition dates, all within one calendar year.
class DateAxis {
 public:
  DateAxis() = default;
  explicit DateAxis(std::vector<Date> dates);

  // T dates spread evenly across the growing year, first near Jan 6.
  static DateAxis even_grid(int year, int timesteps);

  int size() const { return static_cast<int>(dates_.size()); }
  bool empty() const { return dates_.empty(); }
  Date date(int i) const { return dates_[static_cast<std::size_t>(i)]; }
  const std::vector<Date>& dates() const { return dates_; }
  int year() const;
  int day_of_year_at(int i) const { return day_of_year(date(i)); }
  std::vector<double> days_of_year() const;

  std::optional<int> index_of(Date d) const;

  bool operator==(const DateAxis& other) const = default;

 private:
  std::vector<Date> dates_;
};

}  // namespace croptime
