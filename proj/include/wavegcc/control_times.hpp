#ifndef WAVEGCC_CONTROL_TIMES_HPP
#define WAVEGCC_CONTROL_TIMES_HPP

#include "wavegcc/manifold.hpp"
#include "wavegcc/region.hpp"

#include <optional>
#include <vector>

namespace wavegcc {

// Scalar field on time x M: polynomial in t with Fourier-series coefficients.
class TimePolyField {
public:
    TimePolyField() = default;
    explicit TimePolyField(std::vector<FourierSeries2> coeffs) : coeffs_(std::move(coeffs)) {}
    double operator()(double t, const Vec2& x) const {
        double s = 0.0, tp = 1.0;
        for (const auto& c : coeffs_) {
            s += tp * c(x);
            tp *= t;
        }
        return s;
    }
    bool zero() const { return coeffs_.empty(); }
    const std::vector<FourierSeries2>& coeffs() const { return coeffs_; }

private:
    std::vector<FourierSeries2> coeffs_;
};

// Real parts of the first order coefficients entering g_T^+-: a damping
// scalar b0 and a vector field b1 (chart components).
struct LowerOrderData {
    TimePolyField b0;
    TimePolyField b1_1;
    TimePolyField b1_2;
    bool zero() const { return b0.zero() && b1_1.zero() && b1_2.zero(); }
};

// int_0^T b^2(pi phi_t(rho)) dt by composite Simpson along the flow;
// n = max(64, ceil(T/0.005)) intervals.
double geodesic_average(const ManifoldModel& M, const ObservationFunction& b,
                        const PhasePoint& rho, double T);

struct KOfTResult {
    double value = 0.0;
    PhasePoint minimizer;
};

// K(T) = min over S*M of the geodesic average: cosphere grid scan plus
// Nelder-Mead refinement from the best grid points.
KOfTResult K_of_T(const ManifoldModel& M, const ObservationFunction& b, double T,
                  int nx = 24, int na = 16);

struct TgccResult {
    bool finite = true;
    double value = 0.0;            // meaningful when finite
    PhasePoint certifying_ray;     // near-maximal geodesic avoiding omega
    bool analytic_trapped = false; // axis-aligned trapped ray was found exactly
};

// Minimal control time: bisection of the predicate K(T) > eps_zero with
// eps_zero = 1e-8 * amplitude^2 * T. Reports +infinity (finite = false) in the
// trapped-ray regime.
TgccResult t_gcc(const ManifoldModel& M, const ObservationFunction& b,
                 double t_max, double tol, int nx = 24, int na = 16);

struct TimesComparison {
    double t_uc = 0.0;
    TgccResult gcc;
    bool equality = false;
    double calL_error = 0.0;
};

// Computes T_UC and T_GCC and checks T_UC <= T_GCC + combined tolerance;
// a violation indicates a resolution bug and throws.
TimesComparison t_comparison(const ManifoldModel& M, const ObservationFunction& b,
                             double t_max, double tol, int calL_resolution = 256,
                             int nx = 24, int na = 16);

struct EqualityDiagnostic {
    double ray_radius = 0.0;        // R0 = dist(x_star, omega)
    double max_interior_hit = 0.0;  // how deep any ray enters omega before |t| = R0
    double max_boundary_miss = 0.0; // dist to omega closure at |t| = R0
    bool passed = false;
};

// Verifies the equality-case geometry: rays from x_star stay outside omega for
// |t| < R0 and land on the closure at |t| = R0.
EqualityDiagnostic equality_case_diagnostic(const ManifoldModel& M, const ObservationFunction& b,
                                            const Vec2& x_star, int na = 64, double tol = 0.02);

// g_T^{+-}(rho): geodesic average weighted by the exponential of the
// accumulated damping and first-order terms. sign = +1 or -1.
double weighted_average(const ManifoldModel& M, const ObservationFunction& b,
                        const LowerOrderData& lot, const PhasePoint& rho, double T, int sign);

struct KGeneralResult {
    double value = 0.0;
    double min_plus = 0.0;
    double min_minus = 0.0;
    PhasePoint minimizer;
};

// K(T) = min(min g_T^+, min g_T^-); the two inner minima agree by the
// sigma-symmetry of the flow.
KGeneralResult K_general(const ManifoldModel& M, const ObservationFunction& b,
                         const LowerOrderData& lot, double T, int nx = 24, int na = 16);

} // namespace wavegcc

#endif
