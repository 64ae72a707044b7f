#ifndef DPG_ERRORS_HPP
#define DPG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dpg {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad setup: mismatched layer dims, invalid bounds, malformed run config.
struct config_error : error {
    using error::error;
};

// API misuse: stale tape, querying before initialization.
struct usage_error : error {
    using error::error;
};

// Caller handed in data that violates a precondition (e.g. out-of-bound action).
struct contract_error : error {
    using error::error;
};

// Inconsistent data from storage or the wire (dimension mismatch in a stored tuple).
struct data_error : error {
    using error::error;
};

// Numerics left the sane regime: NaN/Inf parameters or a norm ceiling breach.
struct stability_error : error {
    using error::error;
};

// CSV/config file does not match the expected schema version or columns.
struct schema_error : error {
    using error::error;
};

// A peer policy (or similar) was requested before it was ever provided.
struct not_initialized_error : error {
    using error::error;
};

} // namespace dpg

#endif
