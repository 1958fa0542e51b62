#include "croptime/dates.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "croptime/errors.hpp"

namespace croptime {

Date parse_iso_date(const std::string& text) {
  int y = 0, m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &tail) != 3 ||
      text.size() != 10) {
    throw ParseError("invalid date '" + text + "', expected YYYY-MM-DD");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{unsigned(m)},
                                        std::chrono::day{unsigned(d)}};
  if (!ymd.ok()) {
    throw ParseError("invalid calendar date '" + text + "'");
  }
  return std::chrono::sys_days{ymd};
}

std::string format_iso_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(ymd.year()),
                unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

int date_year(Date d) {
  return int(std::chrono::year_month_day{d}.year());
}

int day_of_year(Date d) {
  const std::chrono::year_month_day ymd{d};
  const Date jan1{std::chrono::sys_days{ymd.year() / std::chrono::January / 1}};
  return int((d - jan1).count()) + 1;
}

DateAxis::DateAxis(std::vector<Date> dates) : dates_(std::move(dates)) {
  if (dates_.empty()) return;
  const int y = date_year(dates_.front());
  for (std::size_t i = 0; i < dates_.size(); ++i) {
    if (date_year(dates_[i]) != y) {
      throw ValidationError("date axis spans more than one calendar year");
    }
    if (i > 0 && dates_[i] <= dates_[i - 1]) {
      throw ValidationError("date axis is not strictly increasing at entry " +
                            std::to_string(i));
    }
  }
}

DateAxis DateAxis::even_grid(int year, int timesteps) {
  if (timesteps < 2 || timesteps > 350) {
    throw ConfigError("even_grid needs between 2 and 350 timesteps, got " +
                      std::to_string(timesteps));
  }
  const Date jan1{
      std::chrono::sys_days{std::chrono::year{year} / std::chrono::January / 1}};
  // Day 6 through day 358, the usual acquisition span of one season.
  const double first = 6.0, last = 358.0;
  std::vector<Date> dates;
  dates.reserve(std::size_t(timesteps));
  int prev = 0;
  for (int k = 0; k < timesteps; ++k) {
    int doy = int(std::lround(first + (last - first) * k / (timesteps - 1)));
    if (doy <= prev) doy = prev + 1;  // rounding may collide for dense grids
    prev = doy;
    dates.push_back(jan1 + std::chrono::days{doy - 1});
  }
  return DateAxis(std::move(dates));
}

int DateAxis::year() const {
  if (dates_.empty()) throw ValidationError("empty date axis has no year");
  return date_year(dates_.front());
}

std::vector<double> DateAxis::days_of_year() const {
  std::vector<double> days;
  days.reserve(dates_.size());
  for (const Date& d : dates_) days.push_back(double(day_of_year(d)));
  return days;
}

std::optional<int> DateAxis::index_of(Date d) const {
  const auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
  if (it == dates_.end() || *it != d) return std::nullopt;
  return int(it - dates_.begin());
}

}  // namespace croptime
