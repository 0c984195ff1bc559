#ifndef WAVEGCC_MANIFOLD_HPP
#define WAVEGCC_MANIFOLD_HPP

#include <Eigen/Dense>
#include <memory>
#include <mutex>
#include <map>
#include <vector>

namespace wavegcc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

// One cosine term of a real periodic field: amp * cos(2*pi*(k1 x1/L1 + k2 x2/L2) + phase).
struct FourierTerm {
    int k1 = 0;
    int k2 = 0;
    double amp = 0.0;
    double phase = 0.0;
};

// Real smooth periodic scalar field on the torus, given as a finite cosine series.
// Used for conformal factors, lower-order coefficients and probe symbols.
class FourierSeries2 {
public:
    FourierSeries2() = default;
    FourierSeries2(std::vector<FourierTerm> terms, double L1, double L2)
        : terms_(std::move(terms)), L1_(L1), L2_(L2) {}

    double operator()(const Vec2& x) const;
    Vec2 gradient(const Vec2& x) const;
    bool empty() const { return terms_.empty(); }
    const std::vector<FourierTerm>& terms() const { return terms_; }
    double period1() const { return L1_; }
    double period2() const { return L2_; }

private:
    std::vector<FourierTerm> terms_;
    double L1_ = 1.0;
    double L2_ = 1.0;
};

enum class ManifoldKind { FlatTorus2, RoundSphere2, PerturbedTorus2 };

// Point of the cotangent bundle in chart coordinates. On torus kinds the chart
// is the fundamental domain [0,L1)x[0,L2); on the sphere it is colatitude /
// longitude (theta, phi).
struct PhasePoint {
    Vec2 x = Vec2::Zero();
    Vec2 xi = Vec2::Zero();
};

// Uniformly sampled Hamiltonian trajectory t -> phi_t(p).
struct FlowTrajectory {
    std::vector<double> times;
    std::vector<PhasePoint> points;
    double step = 0.0;
};

// Compact model manifold: flat torus, round unit sphere, or a conformally
// perturbed torus with metric g_x = exp(2 u(x)) * identity.
class ManifoldModel {
public:
    static ManifoldModel flat_torus(double L1, double L2);
    static ManifoldModel round_sphere();
    static ManifoldModel perturbed_torus(double L1, double L2, FourierSeries2 u);

    ManifoldKind kind() const { return kind_; }
    double period1() const { return L1_; }
    double period2() const { return L2_; }
    const FourierSeries2& conformal_factor() const { return u_; }
    bool is_torus() const { return kind_ != ManifoldKind::RoundSphere2; }

    // Metric and cometric at a chart point (2x2, symmetric positive definite).
    Mat2 metric_cov(const Vec2& x) const;
    Mat2 metric_inv(const Vec2& x) const;

    // |xi|_x = sqrt(g*_x(xi,xi)).
    double lambda(const PhasePoint& p) const;

    // Canonical chart representative (wraps torus coordinates, wraps phi on the sphere).
    Vec2 wrap_point(const Vec2& x) const;
    // Chart-coordinate difference honoring periodicity; used for residual norms.
    Vec2 chart_delta(const Vec2& a, const Vec2& b) const;

    // Hamiltonian flow of lambda at signed time t. Closed form on the flat
    // torus and the sphere, fixed-step RK4 with Richardson self-check on the
    // perturbed torus.
    PhasePoint geodesic_flow(const PhasePoint& p, double t) const;

    FlowTrajectory flow_trajectory(const PhasePoint& p, double T, int n_samples) const;

    // max(|sigma(phi_t(p)) - phi_{-t}(sigma(p))|, |phi_t(phi_{-t}(p)) - p|) in chart coordinates.
    double flow_involution_check(const PhasePoint& p, double t) const;

    // Riemannian distance between chart points.
    double distance(const Vec2& a, const Vec2& b) const;

    // Unit covector at x with angle `alpha` in a g*-orthonormal coframe; lambda == 1 exactly.
    PhasePoint cosphere_point(const Vec2& x, double alpha) const;

    // Deterministic product grid on S*M: nx^2 chart points x na directions.
    std::vector<PhasePoint> cosphere_sample(int nx, int na) const;

    // Grid resolution for the Dijkstra distance on the perturbed torus.
    void set_distance_resolution(int n) { dist_resolution_ = n; }
    int distance_resolution() const { return dist_resolution_; }

private:
    ManifoldModel() = default;

    PhasePoint flow_flat(const PhasePoint& p, double t) const;
    PhasePoint flow_sphere(const PhasePoint& p, double t) const;
    PhasePoint flow_rk4(const PhasePoint& p, double t) const;
    PhasePoint rk4_integrate(const PhasePoint& p, double t, double h) const;
    double dijkstra_distance(const Vec2& src, const Vec2& dst) const;

    ManifoldKind kind_ = ManifoldKind::FlatTorus2;
    double L1_ = 1.0;
    double L2_ = 1.0;
    FourierSeries2 u_;
    int dist_resolution_ = 256;

    // Dijkstra fields from recent source points (perturbed torus only).
    struct DistanceField {
        Vec2 source;
        std::vector<double> dist; // row-major res x res
    };
    struct DistanceCache {
        std::mutex mutex;
        std::vector<DistanceField> fields;
    };
    std::shared_ptr<DistanceCache> dist_cache_ = std::make_shared<DistanceCache>();
};

// Extrinsic <-> chart conversions for the unit sphere (exposed for tests).
Vec3 sphere_embed(const Vec2& x);
Vec2 sphere_chart(const Vec3& p);

} // namespace wavegcc

#endif
