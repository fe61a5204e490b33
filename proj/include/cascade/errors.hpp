#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

// Exit-code contract of the command-line tool maps onto these:
// UsageError -> 1, DataError -> 2, DomainError/FitError/StatisticError -> 3.

/// Physical parameter outside its admissible domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Caller violated a precondition that is not about physics (too few points,
/// duplicate basis, malformed option).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input file does not match its documented schema.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A statistic is undefined for the given data (e.g. zero coincidences).
class StatisticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Least-squares fit did not produce a usable solution.
class FitError : public std::runtime_error {
public:
    FitError(const std::string& what, int iterations)
        : std::runtime_error(what), iterations_(iterations) {}

    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

} // namespace cascade
