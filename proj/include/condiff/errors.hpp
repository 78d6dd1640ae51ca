#pragma once

#include <stdexcept>
#include <string>

namespace condiff {

// Bad run setup (incompatible grids, missing oracles, overflow of counter
// space, ...). Distinct from domain_error: the inputs could never be valid.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// A coefficient or integrand produced a non-finite value; the message names
// the probe point.
class evaluation_error : public std::runtime_error {
public:
    explicit evaluation_error(const std::string& what) : std::runtime_error(what) {}
};

// Argument outside the operation's contract (negative initial datum,
// inadmissible test pair, delta <= 0, ...).
class domain_error : public std::runtime_error {
public:
    explicit domain_error(const std::string& what) : std::runtime_error(what) {}
};

// Time stepping failed; carries the step index and the last Newton residual
// so callers can retry with a smaller dt.
class step_error : public std::runtime_error {
public:
    step_error(const std::string& what, long step, double residual)
        : std::runtime_error(what), step_index(step), newton_residual(residual) {}
    long step_index;
    double newton_residual;
};

// Config text rejected; carries the offending line (and for duplicate keys,
// the earlier line as well).
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& what, int line, int other_line = -1)
        : std::runtime_error(what), line_number(line), other_line_number(other_line) {}
    int line_number;
    int other_line_number;
};

} // namespace condiff
