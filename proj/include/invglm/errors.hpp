#ifndef INVGLM_ERRORS_HPP
#define INVGLM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace invglm {

// Violated precondition: bad dimensions, out-of-range indices, malformed input.
class ContractError : public std::invalid_argument {
public:
    explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// A non-finite objective or gradient was produced during optimization.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// The estimator declines to run, e.g. exhaustive search above its size limit.
class RefusalError : public std::runtime_error {
public:
    explicit RefusalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

}  // namespace invglm

#endif
