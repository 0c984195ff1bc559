#ifndef WAVEGCC_REGION_HPP
#define WAVEGCC_REGION_HPP

#include "wavegcc/manifold.hpp"

#include <variant>
#include <vector>

namespace wavegcc {

// Smooth bump supported on the open metric ball {dist(x,center) < r1},
// equal to 1 on {dist <= r0}.
struct BallBump {
    Vec2 center;
    double r0;
    double r1;
};

// Complementary bump: 1 on {dist >= r1}, supported on {dist > r0}. Realizes
// "observation everywhere except a closed disk".
struct BallComplementBump {
    Vec2 center;
    double r0;
    double r1;
};

// Axis-aligned strip on torus kinds. Support is the open band of width w1
// starting at the lower edge `a` in the given axis; the plateau of width w0
// is centered in the band.
struct StripBump {
    int axis; // 1 or 2
    double a;
    double w0;
    double w1;
};

using BumpComponent = std::variant<BallBump, BallComplementBump, StripBump>;

// The exact C^infinity cutoff used by every bump: 0 for t <= 0, 1 for t >= 1,
// exp(-1/t) / (exp(-1/t) + exp(-1/(1-t))) in between.
double smooth_step(double t);

// Smooth observation function b_omega >= 0 with open support omega, built as
// amplitude * (1 - prod_i (1 - profile_i)). Plateaus and supports are exact.
class ObservationFunction {
public:
    ObservationFunction() = default;
    ObservationFunction(std::vector<BumpComponent> components, double amplitude = 1.0);

    double evaluate(const ManifoldModel& M, const Vec2& x) const;

    // Exact distance to the open support omega; 0 iff x is in its closure.
    double dist_to_omega(const ManifoldModel& M, const Vec2& x) const;

    // Exact support predicates.
    bool in_support(const ManifoldModel& M, const Vec2& x) const;
    bool in_closure(const ManifoldModel& M, const Vec2& x) const;

    // Largest "depth" of x inside any component's support (distance to that
    // component's own complement); used by the region shrinking construction.
    double support_margin(const ManifoldModel& M, const Vec2& x) const;

    double amplitude() const { return amplitude_; }
    const std::vector<BumpComponent>& components() const { return components_; }
    bool empty() const { return components_.empty(); }

private:
    std::vector<BumpComponent> components_;
    double amplitude_ = 1.0;
};

struct CalLResult {
    double value = 0.0;       // approximate sup_x dist(x, omega)
    double error_bound = 0.0; // grid bound h*sqrt(2)
    Vec2 argmax = Vec2::Zero();
};

// L(M, omega) = sup_x dist(x, omega): coarse grid max plus golden-section
// refinement around the best grid point.
CalLResult calL(const ObservationFunction& b, const ManifoldModel& M, int resolution = 256);

// Minimal unique-continuation time 2 * L(M, omega).
double t_uc(const ObservationFunction& b, const ManifoldModel& M, int resolution = 256);

// Finite union of balls omega_0 with closure inside omega and
// L(M, omega_0) <= L(M, omega) + eps (finite-cover construction).
ObservationFunction shrink_region(const ObservationFunction& b, const ManifoldModel& M,
                                  double eps, int resolution = 0);

} // namespace wavegcc

#endif
