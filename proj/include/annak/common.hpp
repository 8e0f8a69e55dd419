#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace annak {

// Process exit codes shared by the CLI and the validation command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitValidation = 4;

// Bad or inconsistent user configuration (missing files, contradictory flags).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files (unknown node in an edge, short CSV row, ...).
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Data that parses but cannot be analyzed (degenerate variance, non-convergence).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double missing() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

// Warnings are collected per-thread-unsafe callers should own a sink; the
// default sink appends to a process-wide list and mirrors to stderr.
class WarningSink {
public:
    void emit(const std::string& msg) {
        std::lock_guard<std::mutex> lock(mu_);
        messages_.push_back(msg);
    }
    std::vector<std::string> drain() {
        std::lock_guard<std::mutex> lock(mu_);
        std::vector<std::string> out;
        out.swap(messages_);
        return out;
    }

private:
    std::mutex mu_;
    std::vector<std::string> messages_;
};

WarningSink& global_warnings();
void warn(const std::string& msg);

}  // namespace annak
