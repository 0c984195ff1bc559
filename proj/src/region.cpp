#include "wavegcc/region.hpp"
#include "wavegcc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wavegcc {

namespace {

double wrap_delta(double v, double L) {
    double w = std::fmod(v, L);
    if (w > 0.5 * L) w -= L;
    if (w <= -0.5 * L) w += L;
    return w;
}

struct ComponentGeometry {
    double profile;  // in [0,1]
    double dist;     // distance to the component's open support
    double margin;   // depth inside the support (distance to its complement), <=0 outside
};

ComponentGeometry ball_geometry(const ManifoldModel& M, const Vec2& x, const Vec2& c,
                                double r0, double r1, bool complement) {
    double d = M.distance(x, c);
    ComponentGeometry g{};
    if (!complement) {
        g.profile = smooth_step((r1 - d) / (r1 - r0));
        g.dist = std::max(0.0, d - r1);
        g.margin = r1 - d;
    } else {
        g.profile = smooth_step((d - r0) / (r1 - r0));
        g.dist = std::max(0.0, r0 - d);
        g.margin = d - r0;
    }
    return g;
}

ComponentGeometry strip_geometry(const ManifoldModel& M, const Vec2& x, const StripBump& s) {
    double L = (s.axis == 1) ? M.period1() : M.period2();
    double coord = (s.axis == 1) ? x[0] : x[1];
    double m = s.a + 0.5 * s.w1;
    double h0 = 0.5 * s.w0, h1 = 0.5 * s.w1;
    double u = std::abs(wrap_delta(coord - m, L));
    ComponentGeometry g{};
    g.profile = smooth_step((h1 - u) / (h1 - h0));
    g.dist = std::max(0.0, u - h1);
    g.margin = h1 - u;
    return g;
}

ComponentGeometry component_geometry(const ManifoldModel& M, const Vec2& x, const BumpComponent& c) {
    if (const auto* b = std::get_if<BallBump>(&c))
        return ball_geometry(M, x, b->center, b->r0, b->r1, false);
    if (const auto* b = std::get_if<BallComplementBump>(&c))
        return ball_geometry(M, x, b->center, b->r0, b->r1, true);
    return strip_geometry(M, x, std::get<StripBump>(c));
}

void validate_component(const ManifoldModel& M, const BumpComponent& c) {
    auto check_radii = [](double r0, double r1) {
        if (!(0.0 <= r0 && r0 < r1))
            throw invalid_region_error("bump radii must satisfy 0 <= r0 < r1");
    };
    if (const auto* b = std::get_if<BallBump>(&c))
        check_radii(b->r0, b->r1);
    else if (const auto* b = std::get_if<BallComplementBump>(&c))
        check_radii(b->r0, b->r1);
    else {
        const auto& s = std::get<StripBump>(c);
        if (s.axis != 1 && s.axis != 2)
            throw invalid_region_error("strip axis must be 1 or 2");
        if (!(0.0 <= s.w0 && s.w0 < s.w1))
            throw invalid_region_error("strip widths must satisfy 0 <= w0 < w1");
        if (!M.is_torus())
            throw invalid_region_error("strip components are torus-only");
        double L = (s.axis == 1) ? M.period1() : M.period2();
        if (s.w1 >= L)
            throw invalid_region_error("strip wider than the period");
    }
}

// Chart grid used by calL and shrink_region; returns points and the metric
// spacing bound h.
struct ChartGrid {
    std::vector<Vec2> points;
    double h;
};

ChartGrid chart_grid(const ManifoldModel& M, int resolution) {
    ChartGrid g;
    g.points.reserve((size_t)resolution * resolution);
    if (M.kind() == ManifoldKind::RoundSphere2) {
        for (int i = 0; i < resolution; ++i)
            for (int j = 0; j < resolution; ++j)
                g.points.emplace_back((i + 0.5) * M_PI / resolution,
                                      (j + 0.5) * 2.0 * M_PI / resolution);
        g.h = 2.0 * M_PI / resolution;
    } else {
        double h1 = M.period1() / resolution, h2 = M.period2() / resolution;
        double scale = 1.0;
        if (M.kind() == ManifoldKind::PerturbedTorus2) {
            // conservative metric factor sup exp(u) over the coarse grid
            double m = 0.0;
            for (int i = 0; i < 32; ++i)
                for (int j = 0; j < 32; ++j)
                    m = std::max(m, M.conformal_factor()(Vec2(i * h1 * resolution / 32.0,
                                                              j * h2 * resolution / 32.0)));
            scale = std::exp(m);
        }
        for (int i = 0; i < resolution; ++i)
            for (int j = 0; j < resolution; ++j)
                g.points.emplace_back((i + 0.5) * h1, (j + 0.5) * h2);
        g.h = std::max(h1, h2) * scale;
    }
    return g;
}

} // namespace

double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    double a = std::exp(-1.0 / t);
    double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

ObservationFunction::ObservationFunction(std::vector<BumpComponent> components, double amplitude)
    : components_(std::move(components)), amplitude_(amplitude) {
    if (!(amplitude_ > 0.0))
        throw invalid_region_error("amplitude must be positive");
}

double ObservationFunction::evaluate(const ManifoldModel& M, const Vec2& x) const {
    double prod = 1.0;
    for (const auto& c : components_)
        prod *= 1.0 - component_geometry(M, x, c).profile;
    return amplitude_ * (1.0 - prod);
}

double ObservationFunction::dist_to_omega(const ManifoldModel& M, const Vec2& x) const {
    if (components_.empty())
        throw invalid_region_error("dist_to_omega: empty region");
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : components_)
        d = std::min(d, component_geometry(M, x, c).dist);
    return d;
}

bool ObservationFunction::in_support(const ManifoldModel& M, const Vec2& x) const {
    for (const auto& c : components_)
        if (component_geometry(M, x, c).margin > 0.0)
            return true;
    return false;
}

bool ObservationFunction::in_closure(const ManifoldModel& M, const Vec2& x) const {
    for (const auto& c : components_)
        if (component_geometry(M, x, c).dist <= 0.0)
            return true;
    return false;
}

double ObservationFunction::support_margin(const ManifoldModel& M, const Vec2& x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& c : components_)
        m = std::max(m, component_geometry(M, x, c).margin);
    return m;
}

CalLResult calL(const ObservationFunction& b, const ManifoldModel& M, int resolution) {
    if (b.empty())
        throw invalid_region_error("calL: empty region");
    for (const auto& c : b.components())
        validate_component(M, c);

    ChartGrid grid = chart_grid(M, resolution);
    CalLResult res;
    for (const auto& x : grid.points) {
        double d = b.dist_to_omega(M, x);
        if (d > res.value) {
            res.value = d;
            res.argmax = x;
        }
    }

    // Golden-section refinement along each chart axis around the best point.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    Vec2 best = res.argmax;
    double fbest = res.value;
    double span1 = (M.kind() == ManifoldKind::RoundSphere2) ? M_PI / resolution : M.period1() / resolution;
    double span2 = (M.kind() == ManifoldKind::RoundSphere2) ? 2.0 * M_PI / resolution : M.period2() / resolution;
    for (int round = 0; round < 3; ++round) {
        for (int axis = 0; axis < 2; ++axis) {
            double span = (axis == 0) ? span1 : span2;
            double lo = best[axis] - span, hi = best[axis] + span;
            auto feval = [&](double v) {
                Vec2 p = best;
                p[axis] = v;
                return b.dist_to_omega(M, p);
            };
            double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
            double fc = feval(c), fd = feval(d);
            for (int it = 0; it < 24; ++it) {
                if (fc > fd) {
                    hi = d; d = c; fd = fc;
                    c = hi - gr * (hi - lo); fc = feval(c);
                } else {
                    lo = c; c = d; fc = fd;
                    d = lo + gr * (hi - lo); fd = feval(d);
                }
            }
            double mid = 0.5 * (lo + hi), fmid = feval(mid);
            if (fmid > fbest) {
                fbest = fmid;
                best[axis] = mid;
            }
        }
    }
    res.value = fbest;
    res.argmax = M.wrap_point(best);
    res.error_bound = grid.h * std::sqrt(2.0);
    return res;
}

double t_uc(const ObservationFunction& b, const ManifoldModel& M, int resolution) {
    return 2.0 * calL(b, M, resolution).value;
}

ObservationFunction shrink_region(const ObservationFunction& b, const ManifoldModel& M,
                                  double eps, int resolution) {
    if (!(eps > 0.0))
        throw invalid_input_error("shrink_region: eps must be positive");
    if (b.empty())
        throw invalid_region_error("shrink_region: empty region");

    // Cover M by balls of radius eps/2: grid spacing delta <= eps/sqrt(2).
    int res = resolution;
    if (res <= 0) {
        double extent = M.is_torus() ? std::max(M.period1(), M.period2()) : 2.0 * M_PI;
        res = std::clamp((int)std::ceil(extent / (eps / std::sqrt(2.0))), 8, 512);
    }

    ChartGrid cover = chart_grid(M, res);

    // Candidate support points on a finer grid.
    ChartGrid fine = chart_grid(M, std::min(2 * res, 1024));
    std::vector<Vec2> support_pts;
    for (const auto& x : fine.points)
        if (b.in_support(M, x) && b.support_margin(M, x) > 0.5 * fine.h)
            support_pts.push_back(x);
    if (support_pts.empty())
        throw invalid_region_error("shrink_region: omega has empty interior at this resolution");

    std::vector<BumpComponent> balls;
    auto have_center = [&](const Vec2& y) {
        for (const auto& c : balls)
            if (M.chart_delta(std::get<BallBump>(c).center, y).norm() < 1e-12)
                return true;
        return false;
    };

    for (const auto& xc : cover.points) {
        // nearest support sample to this cover center
        double best = std::numeric_limits<double>::infinity();
        Vec2 y = support_pts.front();
        for (const auto& s : support_pts) {
            double d = M.distance(xc, s);
            if (d < best) {
                best = d;
                y = s;
            }
        }
        double margin = b.support_margin(M, y);
        if (margin <= 0.0)
            continue;
        double r = 0.5 * margin;
        if (!have_center(y))
            balls.push_back(BallBump{y, 0.5 * r, r});
    }
    if (balls.empty())
        throw invalid_region_error("shrink_region: construction produced no balls");
    return ObservationFunction(std::move(balls), b.amplitude());
}

} // namespace wavegcc
