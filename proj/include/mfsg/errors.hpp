#pragma once

#include <stdexcept>
#include <string>

namespace mfsg {

// Configuration parsing / validation failures (CLI exit code 2).
struct ConfigError : std::runtime_error {
    enum class Kind {
        missing_key,
        non_numeric,
        negative_horizon,
        malformed_table,
        unknown_key,
        io,
    };

    ConfigError(Kind k, std::string key_, const std::string& what_)
        : std::runtime_error(what_), kind(k), key(std::move(key_)) {}

    Kind kind;
    std::string key;
};

inline ConfigError missing_key(const std::string& key) {
    return {ConfigError::Kind::missing_key, key, "missing required key: " + key};
}
inline ConfigError non_numeric(const std::string& key, const std::string& value) {
    return {ConfigError::Kind::non_numeric, key,
            "non-numeric value for key " + key + ": '" + value + "'"};
}
inline ConfigError malformed_table(const std::string& key, const std::string& why) {
    return {ConfigError::Kind::malformed_table, key, "malformed table for key " + key + ": " + why};
}

// A trajectory escaped the admissible range (threshold 1e8) or went
// non-finite during integration (CLI exit code 3).
struct BlowUpError : std::runtime_error {
    explicit BlowUpError(double t_)
        : std::runtime_error("trajectory blow-up at t=" + std::to_string(t_)), t(t_) {}
    double t;
};

// Numerical failures of the synthesis pipeline (CLI exit code 3).
struct NumericsError : std::runtime_error {
    enum class Kind {
        division_degenerate,
        negative_r0,
        singular_shooting,
        gamma2_unsolvable,
        internal,
    };

    NumericsError(Kind k, double t_, const std::string& what_)
        : std::runtime_error(what_), kind(k), t(t_) {}

    Kind kind;
    double t;
};

// A perturbation direction referencing a noise stream its owner cannot observe.
struct InadmissibleDirection : std::invalid_argument {
    explicit InadmissibleDirection(const std::string& what_) : std::invalid_argument(what_) {}
};

// Decay fit on a sweep containing nonpositive estimates.
struct DegenerateFit : std::invalid_argument {
    explicit DegenerateFit(const std::string& what_) : std::invalid_argument(what_) {}
};

}  // namespace mfsg
