#ifndef WAVEGCC_ERRORS_HPP
#define WAVEGCC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace wavegcc {

struct invalid_input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct invalid_region_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised by the RK4 flow when step halving bottoms out; keeps the last time
// that was integrated successfully.
struct integration_error : std::runtime_error {
    double last_valid_time;
    integration_error(const std::string& what, double t)
        : std::runtime_error(what), last_valid_time(t) {}
};

struct aliasing_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct resolution_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct stability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct eigensolver_error : std::runtime_error {
    double best_value;
    eigensolver_error(const std::string& what, double ritz)
        : std::runtime_error(what), best_value(ritz) {}
};

struct ill_conditioning_error : std::runtime_error {
    double lambda_min_estimate;
    ill_conditioning_error(const std::string& what, double lmin)
        : std::runtime_error(what), lambda_min_estimate(lmin) {}
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace wavegcc

#endif
