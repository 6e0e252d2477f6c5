#pragma once

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace bner {

// Unreadable or malformed input data (files, corpora, dumps). CLI exit 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible configuration, e.g. checkpoint vs. embedding file dims. CLI exit 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken internal invariant (shape mismatch inside the graph etc.). CLI exit 4.
struct ShapeError : std::logic_error {
    explicit ShapeError(const std::string& msg) : std::logic_error(msg) {}
};

// Verbosity from BNER_LOG: 0 = warnings only, 1 = progress (default), 2 = debug.
inline int log_level() {
    static int level = [] {
        const char* v = std::getenv("BNER_LOG");
        return v ? std::atoi(v) : 1;
    }();
    return level;
}

inline void log_warn(const std::string& msg) {
    std::fprintf(stderr, "[warn] %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[info] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::fprintf(stderr, "[debug] %s\n", msg.c_str());
}

}  // namespace bner
