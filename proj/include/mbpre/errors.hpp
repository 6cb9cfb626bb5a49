#ifndef MBPRE_ERRORS_HPP
#define MBPRE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mbpre {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// v is not a left Perron eigenvector of the supplied mean matrix.
struct EigenMismatch : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

// w == 0 (or D_n == 0): the geometric tail of the law degenerates.
struct DegenerateShift : Error {
    using Error::Error;
};

struct RejectionExhausted : Error {
    using Error::Error;
};

struct UnsupportedFamily : Error {
    using Error::Error;
};

struct RegimeMismatch : Error {
    using Error::Error;
};

struct TailNotConverged : Error {
    using Error::Error;
};

struct MissingRenewalTable : Error {
    using Error::Error;
};

struct ZeroMassCondition : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace mbpre

#endif
