#pragma once

#include <compare>
#include <cstdio>
#include <string>

#include "corrstress/common.hpp"

namespace corrstress {

// Calendar date, ISO-8601 text form. Comparison is field-wise, which matches
// lexicographic order of the ISO strings.
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const Date&) const = default;

    bool valid() const {
        return year >= 1 && month >= 1 && month <= 12 && day >= 1 && day <= 31;
    }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
        return std::string(buf);
    }

    // Quarter index usable as a sort/group key across years.
    int quarter_key() const { return year * 4 + (month - 1) / 3; }
};

inline Date parse_date(const std::string& s) {
    Date d;
    char extra = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c", &d.year, &d.month, &d.day, &extra) != 3 ||
        !d.valid()) {
        throw ValidationError("unparseable date: '" + s + "' (expected YYYY-MM-DD)");
    }
    return d;
}

// Civil-calendar day arithmetic (proleptic Gregorian), used by the synthetic
// data generator and for business-day stepping.
inline long days_from_civil(const Date& dt) {
    long y = dt.year;
    const unsigned m = static_cast<unsigned>(dt.month);
    const unsigned d = static_cast<unsigned>(dt.day);
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

inline Date civil_from_days(long z) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

// 0 = Monday ... 6 = Sunday.
inline int weekday(const Date& d) {
    long z = days_from_civil(d);
    return static_cast<int>(((z % 7) + 10) % 7);
}

inline Date next_business_day(Date d) {
    long z = days_from_civil(d);
    do {
        ++z;
        d = civil_from_days(z);
    } while (weekday(d) >= 5);
    return d;
}

}  // namespace corrstress
