#include "ckd/date.hpp"

#include <cstdio>
#include <stdexcept>

namespace ckd {

namespace {

// Civil-from-days / days-from-civil after Howard Hinnant's algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
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

bool is_leap(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

int days_in_month(int y, int m) {
    static const int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[m - 1];
}

}  // namespace

Date::Date(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month))
        throw std::invalid_argument("invalid calendar date");
    serial_ = days_from_civil(year, month, day);
}

Date Date::parse_iso(const std::string& text) {
    int y = 0, m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3)
        throw std::invalid_argument("not an ISO-8601 date: '" + text + "'");
    return Date(y, m, d);
}

int Date::year() const {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    return y;
}

int Date::month() const {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    return m;
}

int Date::day() const {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    return d;
}

Date Date::add_months(int n) const {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    const int total = (y * 12 + (m - 1)) + n;
    int ny = total / 12;
    int nm = total % 12;
    if (nm < 0) {
        nm += 12;
        ny -= 1;
    }
    nm += 1;
    const int nd = std::min(d, days_in_month(ny, nm));
    return Date(ny, nm, nd);
}

std::string Date::to_iso() const {
    int y, m, d;
    civil_from_days(serial_, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

}  // namespace ckd
