#pragma once

#include <compare>
#include <optional>
#include <string>

namespace optbt {

// Calendar day stored as days since 1970-01-01. Cheap to copy and order;
// all conversions go through the civil-calendar helpers below.
struct Date {
    int serial = 0;

    auto operator<=>(const Date&) const = default;
};

struct YearMonthDay {
    int year = 0;
    int month = 0;  // 1..12
    int day = 0;    // 1..31
};

Date make_date(int year, int month, int day);
YearMonthDay to_ymd(Date d);

// 0 = Monday .. 6 = Sunday.
int weekday(Date d);
bool is_weekday(Date d);

Date add_days(Date d, int n);
int days_between(Date a, Date b);  // b - a

// Same month/day with the year shifted; Feb 29 maps to Mar 1 when the
// target year is not a leap year.
Date add_years(Date d, int n);

// Standard monthly option expiration.
Date third_friday(int year, int month);
bool is_third_friday(Date d);
// Third Friday of the month after d's month.
Date next_month_expiry(Date d);

std::optional<Date> parse_iso_date(const std::string& s);
std::string to_iso_string(Date d);

}  // namespace optbt
