#ifndef WAVEGCC_NUMERICS_HPP
#define WAVEGCC_NUMERICS_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace wavegcc {

// Composite Simpson weights for n_intervals (made even by rounding up) on [0,T].
// Returns nodes and weights; all weights are positive.
struct SimpsonRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
SimpsonRule simpson_rule(double T, int n_intervals);

// Nelder-Mead in dimension d with an evaluation budget. Returns best point.
struct NelderMeadResult {
    Eigen::VectorXd x;
    double value;
    int evaluations;
};
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double scale, int max_evals);

} // namespace wavegcc

#endif
