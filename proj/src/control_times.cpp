#include "wavegcc/control_times.hpp"
#include "wavegcc/errors.hpp"
#include "wavegcc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wavegcc {

SimpsonRule simpson_rule(double T, int n_intervals) {
    int n = std::max(2, n_intervals);
    if (n % 2) ++n;
    SimpsonRule rule;
    rule.nodes.resize(n + 1);
    rule.weights.resize(n + 1);
    double h = T / n;
    for (int j = 0; j <= n; ++j) {
        rule.nodes[j] = j * h;
        double w = (j == 0 || j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        rule.weights[j] = w * h / 3.0;
    }
    return rule;
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double scale, int max_evals) {
    const int d = (int)x0.size();
    struct Vertex {
        Eigen::VectorXd x;
        double v;
    };
    int evals = 0;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        return f(x);
    };
    std::vector<Vertex> simplex;
    simplex.push_back({x0, eval(x0)});
    for (int i = 0; i < d; ++i) {
        Eigen::VectorXd x = x0;
        x[i] += scale;
        simplex.push_back({x, eval(x)});
    }
    auto order = [&] {
        std::sort(simplex.begin(), simplex.end(),
                  [](const Vertex& a, const Vertex& b) { return a.v < b.v; });
    };
    order();
    while (evals < max_evals) {
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (int i = 0; i < d; ++i) centroid += simplex[i].x;
        centroid /= d;
        const Vertex& worst = simplex[d];
        Eigen::VectorXd xr = centroid + (centroid - worst.x);
        double fr = eval(xr);
        if (fr < simplex[0].v) {
            Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst.x);
            double fe = eval(xe);
            simplex[d] = (fe < fr) ? Vertex{xe, fe} : Vertex{xr, fr};
        } else if (fr < simplex[d - 1].v) {
            simplex[d] = {xr, fr};
        } else {
            Eigen::VectorXd xc = centroid + 0.5 * (worst.x - centroid);
            double fc = eval(xc);
            if (fc < worst.v) {
                simplex[d] = {xc, fc};
            } else {
                for (int i = 1; i <= d; ++i) {
                    simplex[i].x = simplex[0].x + 0.5 * (simplex[i].x - simplex[0].x);
                    simplex[i].v = eval(simplex[i].x);
                    if (evals >= max_evals) break;
                }
            }
        }
        order();
        if ((simplex[d].x - simplex[0].x).norm() < 1e-12) break;
    }
    return {simplex[0].x, simplex[0].v, evals};
}

namespace {

int average_intervals(double T) {
    return std::max(64, (int)std::ceil(T / 0.005));
}

double wrap_delta(double v, double L) {
    double w = std::fmod(v, L);
    if (w > 0.5 * L) w -= L;
    if (w <= -0.5 * L) w += L;
    return w;
}

// Objective wrapper: phase point parametrized by (x1, x2, angle).
PhasePoint param_point(const ManifoldModel& M, const Eigen::VectorXd& q) {
    Vec2 x(q[0], q[1]);
    if (M.kind() == ManifoldKind::RoundSphere2)
        x[0] = std::clamp(x[0], 1e-3, M_PI - 1e-3);
    return M.cosphere_point(x, q[2]);
}

KOfTResult minimize_over_cosphere(const ManifoldModel& M,
                                  const std::function<double(const PhasePoint&)>& avg,
                                  int nx, int na) {
    struct Cand {
        double value;
        Vec2 x;
        double angle;
    };
    std::vector<Cand> cands;
    cands.reserve((size_t)nx * nx * na);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            Vec2 x;
            if (M.kind() == ManifoldKind::RoundSphere2)
                x = Vec2((i + 0.5) * M_PI / nx, j * 2.0 * M_PI / nx);
            else
                x = Vec2(i * M.period1() / nx, j * M.period2() / nx);
            for (int k = 0; k < na; ++k) {
                double alpha = 2.0 * M_PI * k / na;
                cands.push_back({avg(M.cosphere_point(x, alpha)), x, alpha});
            }
        }
    std::sort(cands.begin(), cands.end(),
              [](const Cand& a, const Cand& b) { return a.value < b.value; });

    KOfTResult best;
    best.value = cands.front().value;
    best.minimizer = M.cosphere_point(cands.front().x, cands.front().angle);

    double dx = (M.kind() == ManifoldKind::RoundSphere2) ? M_PI / nx
                                                         : std::max(M.period1(), M.period2()) / nx;
    double scale = 0.5 * std::max(dx, 2.0 * M_PI / na);
    int n_starts = std::min<size_t>(5, cands.size());
    for (int s = 0; s < n_starts; ++s) {
        Eigen::VectorXd q(3);
        q << cands[s].x[0], cands[s].x[1], cands[s].angle;
        auto res = nelder_mead([&](const Eigen::VectorXd& p) { return avg(param_point(M, p)); },
                               q, scale, 200);
        if (res.value < best.value) {
            best.value = res.value;
            best.minimizer = param_point(M, res.x);
        }
    }
    return best;
}

// Exact margin of an axis-aligned line to a component's support; the line is
// {x_axis = c} running along the other axis. Negative or zero means the line
// meets the closure.
double line_margin(const ManifoldModel& M, const BumpComponent& comp, int axis, double c) {
    double L = (axis == 1) ? M.period1() : M.period2();
    if (const auto* ball = std::get_if<BallBump>(&comp)) {
        double d = std::abs(wrap_delta(c - ball->center[axis - 1], L));
        return d - ball->r1;
    }
    if (std::get_if<BallComplementBump>(&comp)) {
        // every axis line leaves any disk of radius < period/2, so it meets
        // the complement's support
        return -1.0;
    }
    const auto& s = std::get<StripBump>(comp);
    if (s.axis != axis)
        return -1.0; // transversal strip is always crossed
    double m = s.a + 0.5 * s.w1;
    return std::abs(wrap_delta(c - m, L)) - 0.5 * s.w1;
}

// Scan for an axis-aligned trapped ray; returns the certifying phase point if
// a line with positive margin to every component exists.
std::optional<PhasePoint> axis_trapped_ray(const ManifoldModel& M, const ObservationFunction& b) {
    if (!M.is_torus())
        return std::nullopt;
    for (int axis = 1; axis <= 2; ++axis) {
        double L = (axis == 1) ? M.period1() : M.period2();
        const int n_scan = 4096;
        double best_margin = -std::numeric_limits<double>::infinity();
        double best_c = 0.0;
        for (int i = 0; i < n_scan; ++i) {
            double c = (i + 0.5) * L / n_scan;
            double m = std::numeric_limits<double>::infinity();
            for (const auto& comp : b.components())
                m = std::min(m, line_margin(M, comp, axis, c));
            if (m > best_margin) {
                best_margin = m;
                best_c = c;
            }
        }
        if (best_margin > 1e-9) {
            Vec2 x = (axis == 1) ? Vec2(best_c, 0.0) : Vec2(0.0, best_c);
            double angle = (axis == 1) ? M_PI / 2.0 : 0.0; // run along the other axis
            return M.cosphere_point(x, angle);
        }
    }
    return std::nullopt;
}

} // namespace

double geodesic_average(const ManifoldModel& M, const ObservationFunction& b,
                        const PhasePoint& rho, double T) {
    if (T < 0.0)
        throw invalid_input_error("geodesic_average: T must be nonnegative");
    if (T == 0.0)
        return 0.0;
    int n = average_intervals(T);
    auto rule = simpson_rule(T, n);
    auto traj = M.flow_trajectory(rho, T, (int)rule.nodes.size());
    double acc = 0.0;
    for (size_t j = 0; j < rule.nodes.size(); ++j) {
        double v = b.evaluate(M, traj.points[j].x);
        acc += rule.weights[j] * v * v;
    }
    return acc;
}

KOfTResult K_of_T(const ManifoldModel& M, const ObservationFunction& b, double T,
                  int nx, int na) {
    if (T == 0.0)
        return {0.0, M.cosphere_point({0.0, 0.0}, 0.0)};
    return minimize_over_cosphere(
        M, [&](const PhasePoint& p) { return geodesic_average(M, b, p, T); }, nx, na);
}

TgccResult t_gcc(const ManifoldModel& M, const ObservationFunction& b,
                 double t_max, double tol, int nx, int na) {
    if (!(t_max > 0.0) || !(tol > 0.0))
        throw invalid_input_error("t_gcc: t_max and tol must be positive");
    TgccResult out;

    if (auto ray = axis_trapped_ray(M, b)) {
        out.finite = false;
        out.analytic_trapped = true;
        out.certifying_ray = *ray;
        return out;
    }

    const double amp2 = b.amplitude() * b.amplitude();
    auto eps_zero = [&](double T) { return 1e-8 * amp2 * T; };

    auto k_top = K_of_T(M, b, t_max, nx, na);
    if (k_top.value <= eps_zero(t_max)) {
        // declare trapped only if the minimizing direction is grid-stable
        // under doubling the angular resolution
        auto k_check = K_of_T(M, b, t_max, nx, 2 * na);
        if (k_check.value <= eps_zero(t_max)) {
            out.finite = false;
            out.certifying_ray = k_check.minimizer;
            return out;
        }
        k_top = k_check;
    }

    double lo = 0.0, hi = t_max;
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        auto k = K_of_T(M, b, mid, nx, na);
        if (k.value > eps_zero(mid))
            hi = mid;
        else
            lo = mid;
    }
    out.value = hi;
    // certifying geodesic: minimizer just below the threshold time
    double t_cert = std::max(0.5 * tol, lo);
    out.certifying_ray = K_of_T(M, b, t_cert, nx, na).minimizer;
    return out;
}

TimesComparison t_comparison(const ManifoldModel& M, const ObservationFunction& b,
                             double t_max, double tol, int calL_resolution, int nx, int na) {
    TimesComparison cmp;
    auto L = calL(b, M, calL_resolution);
    cmp.t_uc = 2.0 * L.value;
    cmp.calL_error = 2.0 * L.error_bound;
    cmp.gcc = t_gcc(M, b, t_max, tol, nx, na);
    if (cmp.gcc.finite) {
        double combined = cmp.calL_error + tol;
        if (cmp.t_uc > cmp.gcc.value + combined)
            throw std::runtime_error("t_comparison: T_UC exceeds T_GCC beyond tolerance "
                                     "(resolution inconsistency)");
        cmp.equality = std::abs(cmp.gcc.value - cmp.t_uc) <= combined;
    }
    return cmp;
}

EqualityDiagnostic equality_case_diagnostic(const ManifoldModel& M, const ObservationFunction& b,
                                            const Vec2& x_star, int na, double tol) {
    EqualityDiagnostic diag;
    diag.ray_radius = b.dist_to_omega(M, x_star);
    double R0 = diag.ray_radius;
    if (R0 <= 0.0) {
        diag.passed = false;
        return diag;
    }
    const int n_t = 64;
    for (int k = 0; k < na; ++k) {
        PhasePoint p = M.cosphere_point(x_star, 2.0 * M_PI * k / na);
        for (int sgn : {-1, 1}) {
            for (int j = 1; j < n_t; ++j) {
                double t = sgn * (R0 - tol) * j / n_t;
                if (b.in_support(M, M.geodesic_flow(p, t).x))
                    diag.max_interior_hit =
                        std::max(diag.max_interior_hit, R0 - std::abs(t));
            }
            double miss = b.dist_to_omega(M, M.geodesic_flow(p, sgn * R0).x);
            diag.max_boundary_miss = std::max(diag.max_boundary_miss, miss);
        }
    }
    diag.passed = diag.max_interior_hit <= tol && diag.max_boundary_miss <= tol;
    return diag;
}

double weighted_average(const ManifoldModel& M, const ObservationFunction& b,
                        const LowerOrderData& lot, const PhasePoint& rho, double T, int sign) {
    if (sign != 1 && sign != -1)
        throw invalid_input_error("weighted_average: sign must be +-1");
    if (T < 0.0)
        throw invalid_input_error("weighted_average: T must be nonnegative");
    if (T == 0.0)
        return 0.0;
    int n = average_intervals(T);
    auto rule = simpson_rule(T, n);
    int n_nodes = (int)rule.nodes.size();

    // phi^- at time t is phi at time -t
    auto traj = M.flow_trajectory(
        PhasePoint{rho.x, sign > 0 ? rho.xi : Vec2(-rho.xi)}, T, n_nodes);
    // The trajectory of (x, -xi) visits the same base points as phi^-_t with
    // reversed momentum, so for phi^-_t = (x(-t), xi(-t)) flip the sampled xi.

    double acc = 0.0;
    double inner = 0.0; // trapezoid accumulation of the exponent
    double prev_f = 0.0;
    double h = rule.nodes.size() > 1 ? rule.nodes[1] - rule.nodes[0] : 0.0;
    for (int j = 0; j < n_nodes; ++j) {
        double t = rule.nodes[j];
        const PhasePoint& q = traj.points[j];
        Vec2 x = q.x;
        Vec2 xi = (sign > 0) ? q.xi : Vec2(-q.xi);
        double f = 0.0;
        if (!lot.zero()) {
            double lam = M.lambda(q);
            Vec2 b1(lot.b1_1(t, x), lot.b1_2(t, x));
            f = lot.b0(t, x) + sign * (xi.dot(b1)) / lam;
        }
        if (j > 0)
            inner += 0.5 * h * (prev_f + f);
        prev_f = f;
        double bv = b.evaluate(M, x);
        acc += rule.weights[j] * bv * bv * std::exp(inner);
    }
    return acc;
}

KGeneralResult K_general(const ManifoldModel& M, const ObservationFunction& b,
                         const LowerOrderData& lot, double T, int nx, int na) {
    KGeneralResult out;
    auto plus = minimize_over_cosphere(
        M, [&](const PhasePoint& p) { return weighted_average(M, b, lot, p, T, +1); }, nx, na);
    auto minus = minimize_over_cosphere(
        M, [&](const PhasePoint& p) { return weighted_average(M, b, lot, p, T, -1); }, nx, na);
    out.min_plus = plus.value;
    out.min_minus = minus.value;
    if (plus.value <= minus.value) {
        out.value = plus.value;
        out.minimizer = plus.minimizer;
    } else {
        out.value = minus.value;
        out.minimizer = minus.minimizer;
    }
    return out;
}

} // namespace wavegcc
