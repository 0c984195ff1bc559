#include "wavegcc/manifold.hpp"
#include "wavegcc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace wavegcc {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;

double wrap_periodic(double v, double L) {
    double w = std::fmod(v, L);
    if (w < 0.0) w += L;
    return w;
}

// Signed wrapped difference in (-L/2, L/2].
double wrap_delta(double v, double L) {
    double w = std::fmod(v, L);
    if (w > 0.5 * L) w -= L;
    if (w <= -0.5 * L) w += L;
    return w;
}
} // namespace

double FourierSeries2::operator()(const Vec2& x) const {
    double s = 0.0;
    for (const auto& t : terms_)
        s += t.amp * std::cos(kTwoPi * (t.k1 * x[0] / L1_ + t.k2 * x[1] / L2_) + t.phase);
    return s;
}

Vec2 FourierSeries2::gradient(const Vec2& x) const {
    Vec2 g = Vec2::Zero();
    for (const auto& t : terms_) {
        double arg = kTwoPi * (t.k1 * x[0] / L1_ + t.k2 * x[1] / L2_) + t.phase;
        double d = -t.amp * std::sin(arg) * kTwoPi;
        g[0] += d * t.k1 / L1_;
        g[1] += d * t.k2 / L2_;
    }
    return g;
}

ManifoldModel ManifoldModel::flat_torus(double L1, double L2) {
    if (!(L1 > 0.0) || !(L2 > 0.0))
        throw invalid_input_error("flat_torus: periods must be positive");
    ManifoldModel m;
    m.kind_ = ManifoldKind::FlatTorus2;
    m.L1_ = L1;
    m.L2_ = L2;
    return m;
}

ManifoldModel ManifoldModel::round_sphere() {
    ManifoldModel m;
    m.kind_ = ManifoldKind::RoundSphere2;
    m.L1_ = M_PI;    // theta range
    m.L2_ = kTwoPi;  // phi range
    return m;
}

ManifoldModel ManifoldModel::perturbed_torus(double L1, double L2, FourierSeries2 u) {
    if (!(L1 > 0.0) || !(L2 > 0.0))
        throw invalid_input_error("perturbed_torus: periods must be positive");
    ManifoldModel m;
    m.kind_ = ManifoldKind::PerturbedTorus2;
    m.L1_ = L1;
    m.L2_ = L2;
    m.u_ = std::move(u);
    return m;
}

Mat2 ManifoldModel::metric_cov(const Vec2& x) const {
    Mat2 g = Mat2::Identity();
    switch (kind_) {
    case ManifoldKind::FlatTorus2:
        break;
    case ManifoldKind::PerturbedTorus2:
        g *= std::exp(2.0 * u_(x));
        break;
    case ManifoldKind::RoundSphere2: {
        double s = std::sin(x[0]);
        g(1, 1) = s * s;
        break;
    }
    }
    return g;
}

Mat2 ManifoldModel::metric_inv(const Vec2& x) const {
    Mat2 g = Mat2::Identity();
    switch (kind_) {
    case ManifoldKind::FlatTorus2:
        break;
    case ManifoldKind::PerturbedTorus2:
        g *= std::exp(-2.0 * u_(x));
        break;
    case ManifoldKind::RoundSphere2: {
        double s = std::sin(x[0]);
        g(1, 1) = 1.0 / (s * s);
        break;
    }
    }
    return g;
}

double ManifoldModel::lambda(const PhasePoint& p) const {
    if (!p.x.allFinite() || !p.xi.allFinite())
        throw invalid_input_error("lambda: non-finite phase point");
    Mat2 gi = metric_inv(p.x);
    double q = p.xi.dot(gi * p.xi);
    return std::sqrt(std::max(q, 0.0));
}

Vec2 ManifoldModel::wrap_point(const Vec2& x) const {
    if (kind_ == ManifoldKind::RoundSphere2) {
        // theta in [0, pi], phi wrapped to [0, 2*pi)
        Vec2 w = x;
        w[1] = wrap_periodic(w[1], kTwoPi);
        return w;
    }
    return Vec2(wrap_periodic(x[0], L1_), wrap_periodic(x[1], L2_));
}

Vec2 ManifoldModel::chart_delta(const Vec2& a, const Vec2& b) const {
    if (kind_ == ManifoldKind::RoundSphere2)
        return Vec2(a[0] - b[0], wrap_delta(a[1] - b[1], kTwoPi));
    return Vec2(wrap_delta(a[0] - b[0], L1_), wrap_delta(a[1] - b[1], L2_));
}

Vec3 sphere_embed(const Vec2& x) {
    double st = std::sin(x[0]), ct = std::cos(x[0]);
    return Vec3(st * std::cos(x[1]), st * std::sin(x[1]), ct);
}

Vec2 sphere_chart(const Vec3& p) {
    double theta = std::acos(std::clamp(p[2], -1.0, 1.0));
    double phi = std::atan2(p[1], p[0]);
    if (phi < 0.0) phi += kTwoPi;
    return Vec2(theta, phi);
}

PhasePoint ManifoldModel::flow_flat(const PhasePoint& p, double t) const {
    double lam = lambda(p);
    PhasePoint q;
    q.x = wrap_point(p.x + t * p.xi / lam);
    q.xi = p.xi;
    return q;
}

PhasePoint ManifoldModel::flow_sphere(const PhasePoint& p, double t) const {
    // Work extrinsically: position on S^2 and the unit tangent xi^sharp/|xi|.
    double lam = lambda(p);
    Vec3 pos = sphere_embed(p.x);
    double st = std::sin(p.x[0]), ct = std::cos(p.x[0]);
    Vec3 e_theta(ct * std::cos(p.x[1]), ct * std::sin(p.x[1]), -st);
    Vec3 e_phi(-std::sin(p.x[1]), std::cos(p.x[1]), 0.0);
    // xi^sharp = xi_theta e_theta + (xi_phi / sin^2 theta) * (sin theta * e_phi_unit)
    Vec3 v = p.xi[0] * e_theta + (p.xi[1] / st) * e_phi;
    Vec3 vhat = v / lam;

    Vec3 pos_t = pos * std::cos(t) + vhat * std::sin(t);
    Vec3 vhat_t = -pos * std::sin(t) + vhat * std::cos(t);

    PhasePoint q;
    q.x = sphere_chart(pos_t);
    double st_t = std::sin(q.x[0]), ct_t = std::cos(q.x[0]);
    Vec3 et(ct_t * std::cos(q.x[1]), ct_t * std::sin(q.x[1]), -st_t);
    Vec3 ep(-std::sin(q.x[1]), std::cos(q.x[1]), 0.0);
    q.xi[0] = lam * vhat_t.dot(et);
    q.xi[1] = lam * vhat_t.dot(ep) * st_t;
    return q;
}

PhasePoint ManifoldModel::rk4_integrate(const PhasePoint& p, double t, double h) const {
    // Hamilton's equations for lambda = exp(-u(x)) |xi|:
    //   xdot = exp(-u) xi/|xi|,  xidot = lambda * grad u.
    auto deriv = [this](const PhasePoint& s, Vec2& dx, Vec2& dxi) {
        double eu = std::exp(-u_(s.x));
        double nx = s.xi.norm();
        dx = eu * s.xi / nx;
        dxi = eu * nx * u_.gradient(s.x);
    };
    int n = std::max(1, (int)std::ceil(std::abs(t) / h));
    double dt = t / n;
    PhasePoint s = p;
    Vec2 k1x, k1xi, k2x, k2xi, k3x, k3xi, k4x, k4xi;
    for (int i = 0; i < n; ++i) {
        deriv(s, k1x, k1xi);
        PhasePoint s2{s.x + 0.5 * dt * k1x, s.xi + 0.5 * dt * k1xi};
        deriv(s2, k2x, k2xi);
        PhasePoint s3{s.x + 0.5 * dt * k2x, s.xi + 0.5 * dt * k2xi};
        deriv(s3, k3x, k3xi);
        PhasePoint s4{s.x + dt * k3x, s.xi + dt * k3xi};
        deriv(s4, k4x, k4xi);
        s.x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        s.xi += dt / 6.0 * (k1xi + 2.0 * k2xi + 2.0 * k3xi + k4xi);
    }
    s.x = wrap_point(s.x);
    return s;
}

PhasePoint ManifoldModel::flow_rk4(const PhasePoint& p, double t) const {
    double h = std::min(1e-3, std::abs(t) / 1000.0);
    const double h_min = 1e-7;
    while (true) {
        PhasePoint a = rk4_integrate(p, t, h);
        PhasePoint b = rk4_integrate(p, t, 0.5 * h);
        double err = chart_delta(a.x, b.x).norm() + (a.xi - b.xi).norm();
        if (err <= 1e-9 * std::max(1.0, p.xi.norm()))
            return b;
        h *= 0.5;
        if (h < h_min)
            throw integration_error("geodesic_flow: RK4 step-size underflow", t);
    }
}

PhasePoint ManifoldModel::geodesic_flow(const PhasePoint& p, double t) const {
    if (lambda(p) <= 0.0)
        throw invalid_input_error("geodesic_flow: lambda(p) must be positive");
    if (t == 0.0) {
        PhasePoint q = p;
        q.x = wrap_point(q.x);
        return q;
    }
    switch (kind_) {
    case ManifoldKind::FlatTorus2:
        return flow_flat(p, t);
    case ManifoldKind::RoundSphere2:
        return flow_sphere(p, t);
    case ManifoldKind::PerturbedTorus2:
        return flow_rk4(p, t);
    }
    return p;
}

FlowTrajectory ManifoldModel::flow_trajectory(const PhasePoint& p, double T, int n_samples) const {
    if (!(T > 0.0) || n_samples < 2)
        throw invalid_input_error("flow_trajectory: need T > 0 and n >= 2");
    FlowTrajectory traj;
    traj.step = T / (n_samples - 1);
    traj.times.resize(n_samples);
    traj.points.resize(n_samples);
    if (kind_ == ManifoldKind::PerturbedTorus2) {
        // March incrementally so the whole trajectory costs one integration.
        PhasePoint cur = p;
        cur.x = wrap_point(cur.x);
        for (int i = 0; i < n_samples; ++i) {
            traj.times[i] = i * traj.step;
            traj.points[i] = cur;
            if (i + 1 < n_samples)
                cur = geodesic_flow(cur, traj.step);
        }
    } else {
        for (int i = 0; i < n_samples; ++i) {
            traj.times[i] = i * traj.step;
            traj.points[i] = geodesic_flow(p, traj.times[i]);
        }
    }
    return traj;
}

double ManifoldModel::flow_involution_check(const PhasePoint& p, double t) const {
    PhasePoint sp{p.x, -p.xi};
    PhasePoint a = geodesic_flow(p, t);
    PhasePoint b = geodesic_flow(sp, -t);
    Vec2 dxi = -a.xi - b.xi;
    double r1 = std::sqrt(chart_delta(a.x, b.x).squaredNorm() + dxi.squaredNorm());
    PhasePoint c = geodesic_flow(geodesic_flow(p, -t), t);
    double r2 = std::sqrt(chart_delta(c.x, wrap_point(p.x)).squaredNorm() + (c.xi - p.xi).squaredNorm());
    return std::max(r1, r2);
}

double ManifoldModel::distance(const Vec2& a, const Vec2& b) const {
    if (!a.allFinite() || !b.allFinite())
        throw invalid_input_error("distance: non-finite input");
    switch (kind_) {
    case ManifoldKind::FlatTorus2: {
        // Minimum over the 9 lattice translates; lexicographic scan breaks ties.
        double best = std::numeric_limits<double>::infinity();
        for (int i = -1; i <= 1; ++i)
            for (int j = -1; j <= 1; ++j) {
                Vec2 d = wrap_point(b) + Vec2(i * L1_, j * L2_) - wrap_point(a);
                best = std::min(best, d.norm());
            }
        return best;
    }
    case ManifoldKind::RoundSphere2:
        return std::acos(std::clamp(sphere_embed(a).dot(sphere_embed(b)), -1.0, 1.0));
    case ManifoldKind::PerturbedTorus2:
        return dijkstra_distance(a, b);
    }
    return 0.0;
}

double ManifoldModel::dijkstra_distance(const Vec2& src_in, const Vec2& dst_in) const {
    const int n = dist_resolution_;
    const double h1 = L1_ / n, h2 = L2_ / n;
    Vec2 src = wrap_point(src_in), dst = wrap_point(dst_in);

    auto node_of = [&](const Vec2& x) {
        int i = (int)std::lround(x[0] / h1) % n;
        int j = (int)std::lround(x[1] / h2) % n;
        return std::pair<int, int>(i, j);
    };
    auto [si, sj] = node_of(src);

    {
        std::lock_guard<std::mutex> lock(dist_cache_->mutex);
        for (const auto& f : dist_cache_->fields) {
            if (chart_delta(f.source, src).norm() < 0.25 * std::min(h1, h2)) {
                auto [di, dj] = node_of(dst);
                return f.dist[di * n + dj];
            }
        }
    }

    std::vector<double> dist(n * n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    int start = si * n + sj;
    dist[start] = 0.0;
    heap.push({0.0, start});

    // Conformal factor sampled once per node.
    std::vector<double> eu(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            eu[i * n + j] = std::exp(u_(Vec2(i * h1, j * h2)));

    const int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    const int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    while (!heap.empty()) {
        auto [d, idx] = heap.top();
        heap.pop();
        if (d > dist[idx]) continue;
        int i = idx / n, j = idx % n;
        for (int k = 0; k < 8; ++k) {
            int i2 = (i + di[k] + n) % n;
            int j2 = (j + dj[k] + n) % n;
            int idx2 = i2 * n + j2;
            double e_len = std::hypot(di[k] * h1, dj[k] * h2);
            double w = 0.5 * (eu[idx] + eu[idx2]) * e_len;
            if (dist[idx] + w < dist[idx2]) {
                dist[idx2] = dist[idx] + w;
                heap.push({dist[idx2], idx2});
            }
        }
    }

    auto [ti, tj] = node_of(dst);
    double out = dist[ti * n + tj];
    {
        std::lock_guard<std::mutex> lock(dist_cache_->mutex);
        if (dist_cache_->fields.size() >= 8)
            dist_cache_->fields.erase(dist_cache_->fields.begin());
        dist_cache_->fields.push_back({src, std::move(dist)});
    }
    return out;
}

PhasePoint ManifoldModel::cosphere_point(const Vec2& x_in, double alpha) const {
    Vec2 x = wrap_point(x_in);
    PhasePoint p;
    p.x = x;
    double c = std::cos(alpha), s = std::sin(alpha);
    switch (kind_) {
    case ManifoldKind::FlatTorus2:
        p.xi = Vec2(c, s);
        break;
    case ManifoldKind::PerturbedTorus2:
        p.xi = std::exp(u_(x)) * Vec2(c, s);
        break;
    case ManifoldKind::RoundSphere2:
        // g*-orthonormal coframe: (1,0) and (0,sin theta).
        p.xi = Vec2(c, s * std::sin(x[0]));
        break;
    }
    return p;
}

std::vector<PhasePoint> ManifoldModel::cosphere_sample(int nx, int na) const {
    if (nx < 1 || na < 1)
        throw invalid_input_error("cosphere_sample: nx, na must be >= 1");
    std::vector<PhasePoint> out;
    out.reserve((size_t)nx * nx * na);
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < nx; ++j) {
            Vec2 x;
            if (kind_ == ManifoldKind::RoundSphere2)
                x = Vec2((i + 0.5) * M_PI / nx, j * kTwoPi / nx);
            else
                x = Vec2(i * L1_ / nx, j * L2_ / nx);
            for (int k = 0; k < na; ++k)
                out.push_back(cosphere_point(x, kTwoPi * k / na));
        }
    }
    return out;
}

} // namespace wavegcc
