#include "optbt/dates.hpp"

#include <array>
#include <cstdio>

namespace optbt {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> d = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : d[m - 1];
}

// Howard Hinnant's civil-from-days / days-from-civil.
int days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (static_cast<unsigned>(m) + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int>(doe) - 719468;
}

YearMonthDay civil_from_days(int z) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
}

}  // namespace

Date make_date(int year, int month, int day) { return Date{days_from_civil(year, month, day)}; }

YearMonthDay to_ymd(Date d) { return civil_from_days(d.serial); }

int weekday(Date d) {
    // serial 0 = 1970-01-01 = Thursday = index 3.
    int w = (d.serial + 3) % 7;
    return w < 0 ? w + 7 : w;
}

bool is_weekday(Date d) { return weekday(d) < 5; }

Date add_days(Date d, int n) { return Date{d.serial + n}; }

int days_between(Date a, Date b) { return b.serial - a.serial; }

Date add_years(Date d, int n) {
    YearMonthDay ymd = to_ymd(d);
    int y = ymd.year + n;
    if (ymd.month == 2 && ymd.day == 29 && !is_leap(y)) return make_date(y, 3, 1);
    return make_date(y, ymd.month, ymd.day);
}

Date third_friday(int year, int month) {
    Date first = make_date(year, month, 1);
    int w = weekday(first);             // 0=Mon..6=Sun
    int to_friday = (4 - w + 7) % 7;    // days until the first Friday
    return add_days(first, to_friday + 14);
}

bool is_third_friday(Date d) {
    YearMonthDay ymd = to_ymd(d);
    return third_friday(ymd.year, ymd.month) == d;
}

Date next_month_expiry(Date d) {
    YearMonthDay ymd = to_ymd(d);
    int y = ymd.year, m = ymd.month + 1;
    if (m > 12) {
        m = 1;
        ++y;
    }
    return third_friday(y, m);
}

std::optional<Date> parse_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    for (int i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (s[i] < '0' || s[i] > '9') return std::nullopt;
    int y = (s[0] - '0') * 1000 + (s[1] - '0') * 100 + (s[2] - '0') * 10 + (s[3] - '0');
    int m = (s[5] - '0') * 10 + (s[6] - '0');
    int d = (s[8] - '0') * 10 + (s[9] - '0');
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) return std::nullopt;
    return make_date(y, m, d);
}

std::string to_iso_string(Date d) {
    YearMonthDay ymd = to_ymd(d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", ymd.year, ymd.month, ymd.day);
    return buf;
}

}  // namespace optbt
