#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace ckd {

// Calendar date backed by a serial day count (days since 1970-01-01).
// Month arithmetic preserves the day-of-month, clamped to month length.
class Date {
public:
    Date() = default;
    Date(int year, int month, int day);

    static Date from_serial(std::int64_t days) {
        Date d;
        d.serial_ = days;
        return d;
    }
    static Date parse_iso(const std::string& text);  // "YYYY-MM-DD"

    std::int64_t serial() const { return serial_; }
    int year() const;
    int month() const;
    int day() const;

    Date add_days(std::int64_t n) const { return from_serial(serial_ + n); }
    Date add_months(int n) const;

    std::string to_iso() const;

    friend std::int64_t operator-(Date a, Date b) { return a.serial_ - b.serial_; }
    auto operator<=>(const Date&) const = default;

private:
    std::int64_t serial_ = 0;
};

}  // namespace ckd
