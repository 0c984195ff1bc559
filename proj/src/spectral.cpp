#include "wavegcc/spectral.hpp"
#include "wavegcc/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace wavegcc {

namespace {
std::mutex fftw_plan_mutex; // FFTW plan creation is not thread safe

double wrap_delta(double v, double L) {
    double w = std::fmod(v, L);
    if (w > 0.5 * L) w -= L;
    if (w <= -0.5 * L) w += L;
    return w;
}
} // namespace

int friendly_grid_size(int minimum) {
    for (int n = std::max(4, minimum);; ++n) {
        int m = n;
        for (int p : {2, 3, 5})
            while (m % p == 0) m /= p;
        if (m == 1) return n;
    }
}

SpectralBasis::SpectralBasis(int K_max, double L1, double L2)
    : K_(K_max), n_((2 * K_max + 1) * (2 * K_max + 1)), L1_(L1), L2_(L2) {
    if (K_max < 1)
        throw invalid_input_error("SpectralBasis: K_max must be >= 1");
    if (!(L1 > 0.0) || !(L2 > 0.0))
        throw invalid_input_error("SpectralBasis: periods must be positive");
    kappa_.resize(n_);
    lambda_.resize(n_);
    const double c = 4.0 * M_PI * M_PI;
    for (int idx = 0; idx < n_; ++idx) {
        auto [k1, k2] = mode_of(idx);
        kappa_[idx] = c * (k1 * (double)k1 / (L1 * L1) + k2 * (double)k2 / (L2 * L2));
        lambda_[idx] = std::sqrt(kappa_[idx] + 1.0);
    }
}

CollocationGrid::CollocationGrid(const SpectralBasis& basis, int N)
    : basis_(basis) {
    int n_min = 4 * basis.K_max() + 2;
    N_ = (N <= 0) ? friendly_grid_size(n_min) : N;
    if (N_ < n_min)
        throw aliasing_error("CollocationGrid: grid too small for dealiased products");
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    fftw_complex* scratch = fftw_alloc_complex((size_t)N_ * N_);
    plan_fwd_ = fftw_plan_dft_2d(N_, N_, scratch, scratch, FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    plan_bwd_ = fftw_plan_dft_2d(N_, N_, scratch, scratch, FFTW_BACKWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
}

CollocationGrid::~CollocationGrid() {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    fftw_destroy_plan((fftw_plan)plan_fwd_);
    fftw_destroy_plan((fftw_plan)plan_bwd_);
}

GridField CollocationGrid::to_grid(const ScalarField& coeffs) const {
    const int K = basis_.K_max();
    if ((int)coeffs.size() != basis_.n_modes())
        throw invalid_input_error("to_grid: coefficient size mismatch");
    GridField out = GridField::Zero((size_t)N_ * N_);
    for (int idx = 0; idx < basis_.n_modes(); ++idx) {
        auto [k1, k2] = basis_.mode_of(idx);
        int i1 = (k1 % N_ + N_) % N_;
        int i2 = (k2 % N_ + N_) % N_;
        out[(size_t)i1 * N_ + i2] = coeffs[idx];
    }
    fftw_execute_dft((fftw_plan)plan_bwd_, reinterpret_cast<fftw_complex*>(out.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    out *= 1.0 / std::sqrt(basis_.period1() * basis_.period2());
    return out;
}

ScalarField CollocationGrid::from_grid(const GridField& values) const {
    if ((int)values.size() != N_ * N_)
        throw invalid_input_error("from_grid: grid size mismatch");
    GridField tmp = values;
    fftw_execute_dft((fftw_plan)plan_fwd_, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(tmp.data()));
    const double scale = std::sqrt(basis_.period1() * basis_.period2()) / ((double)N_ * N_);
    ScalarField out(basis_.n_modes());
    for (int idx = 0; idx < basis_.n_modes(); ++idx) {
        auto [k1, k2] = basis_.mode_of(idx);
        int i1 = (k1 % N_ + N_) % N_;
        int i2 = (k2 % N_ + N_) % N_;
        out[idx] = scale * tmp[(size_t)i1 * N_ + i2];
    }
    return out;
}

Eigen::VectorXcd CollocationGrid::full_spectrum(const GridField& values) const {
    if ((int)values.size() != N_ * N_)
        throw invalid_input_error("full_spectrum: grid size mismatch");
    Eigen::VectorXcd tmp = values;
    fftw_execute_dft((fftw_plan)plan_fwd_, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(tmp.data()));
    tmp *= std::sqrt(basis_.period1() * basis_.period2()) / ((double)N_ * N_);
    return tmp;
}

RealGrid CollocationGrid::sample(const std::function<double(const Vec2&)>& f) const {
    RealGrid out(n_points());
    for (int i = 0; i < N_; ++i)
        for (int j = 0; j < N_; ++j)
            out[(size_t)i * N_ + j] = f(point(i, j));
    return out;
}

ScalarField apply_lambda_s(const SpectralBasis& basis, const ScalarField& v, double s) {
    if (s == 0.0) return v;
    return (v.array() * (basis.kappa() + 1.0).pow(0.5 * s)).matrix();
}

double hs_norm(const SpectralBasis& basis, const ScalarField& v, double s) {
    return std::sqrt(((basis.kappa() + 1.0).pow(s) * v.array().abs2()).sum());
}

SplitPair split_sigma(const SpectralBasis& basis, const CauchyPair& v) {
    const std::complex<double> I(0.0, 1.0);
    SplitPair out;
    Eigen::ArrayXcd l_inv = (1.0 / basis.lambda()).cast<std::complex<double>>();
    out.vp = 0.5 * (v.v0.array() - I * l_inv * v.v1.array());
    out.vm = 0.5 * (v.v0.array() + I * l_inv * v.v1.array());
    return out;
}

CauchyPair unsplit_sigma(const SpectralBasis& basis, const SplitPair& v) {
    const std::complex<double> I(0.0, 1.0);
    CauchyPair out;
    out.v0 = v.vp + v.vm;
    out.v1 = (I * basis.lambda().cast<std::complex<double>>() * (v.vp - v.vm).array()).matrix();
    return out;
}

ScalarField propagate_free(const SpectralBasis& basis, const ScalarField& v, double t, int sign) {
    if (sign != 1 && sign != -1)
        throw invalid_input_error("propagate_free: sign must be +-1");
    const std::complex<double> I(0.0, 1.0);
    Eigen::ArrayXcd phase = ((double)sign * t * basis.lambda()).cast<std::complex<double>>();
    return (v.array() * (I * phase).exp()).matrix();
}

CauchyPair propagate_free_pair(const SpectralBasis& basis, const CauchyPair& v, double t) {
    SplitPair s = split_sigma(basis, v);
    s.vp = propagate_free(basis, s.vp, t, +1);
    s.vm = propagate_free(basis, s.vm, t, -1);
    return unsplit_sigma(basis, s);
}

ScalarField multiply_function(const CollocationGrid& grid, const ScalarField& v, const RealGrid& f) {
    if ((int)f.size() != grid.n_points())
        throw aliasing_error("multiply_function: field not sampled on this grid");
    GridField g = grid.to_grid(v);
    g.array() *= f.array();
    return grid.from_grid(g);
}

double energy(const SpectralBasis& basis, const CauchyPair& v, double s) {
    double n0 = hs_norm(basis, v.v0, s);
    double n1 = hs_norm(basis, v.v1, s - 1.0);
    return 0.5 * (n0 * n0 + n1 * n1);
}

double energy_c(const CollocationGrid& grid, const CauchyPair& v, const RealGrid& c) {
    const SpectralBasis& basis = grid.basis();
    double kinetic = v.v1.squaredNorm();
    double dirichlet = (basis.kappa() * v.v0.array().abs2()).sum();
    GridField u = grid.to_grid(v.v0);
    double potential = grid.cell_weight() * (c.array() * u.array().abs2()).sum();
    return 0.5 * (kinetic + dirichlet + potential);
}

CauchyPair shell_project(const SpectralBasis& basis, const CauchyPair& v, double kappa) {
    CauchyPair out = v;
    for (int idx = 0; idx < basis.n_modes(); ++idx)
        if (basis.kappa()[idx] <= kappa) {
            out.v0[idx] = 0.0;
            out.v1[idx] = 0.0;
        }
    return out;
}

bool shell_member(const SpectralBasis& basis, const CauchyPair& v, double kappa) {
    for (int idx = 0; idx < basis.n_modes(); ++idx)
        if (basis.kappa()[idx] <= kappa &&
            (v.v0[idx] != std::complex<double>(0.0) || v.v1[idx] != std::complex<double>(0.0)))
            return false;
    return true;
}

ScalarField gaussian_beam(const CollocationGrid& grid, const PhasePoint& rho0, int k, double s) {
    const SpectralBasis& basis = grid.basis();
    if (k < 4)
        throw invalid_input_error("gaussian_beam: k must be >= 4");
    if (2 * k > basis.K_max())
        throw resolution_error("gaussian_beam: k too large for the frequency cutoff");

    const double L1 = basis.period1(), L2 = basis.period2();
    const Vec2 y0 = rho0.x;
    const Vec2 eta = rho0.xi; // assumed cosphere-normalized: |eta| = 1 on the flat torus
    const std::complex<double> I(0.0, 1.0);
    const int N = grid.size();

    GridField w(grid.n_points());
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            Vec2 dy(wrap_delta(i * L1 / N - y0[0], L1), wrap_delta(j * L2 / N - y0[1], L2));
            double r = dy.norm();
            double cutoff = smooth_step((0.2 - r) / 0.1); // bump of radius 0.2
            if (cutoff == 0.0) {
                w[(size_t)i * N + j] = 0.0;
                continue;
            }
            double phase = 2.0 * M_PI * k * dy.dot(eta);
            double envelope = std::exp(-2.0 * M_PI * k * r * r);
            w[(size_t)i * N + j] = std::sqrt((double)k) * cutoff * envelope *
                                   std::exp(I * phase);
        }
    }
    ScalarField beam = apply_lambda_s(basis, grid.from_grid(w), -s);
    double n = hs_norm(basis, beam, s);
    if (!(n > 0.0))
        throw resolution_error("gaussian_beam: vanishing beam");
    return beam / n;
}

double beam_concentration(const SpectralBasis& basis, const ScalarField& beam,
                          const Vec2& eta0, int k, double s, double angle) {
    Vec2 dir = eta0.normalized();
    double total = 0.0, inside = 0.0;
    for (int idx = 0; idx < basis.n_modes(); ++idx) {
        double mass = std::pow(basis.kappa()[idx] + 1.0, s) * std::norm(beam[idx]);
        total += mass;
        auto [k1, k2] = basis.mode_of(idx);
        Vec2 m((double)k1, (double)k2);
        double mag = m.norm();
        if (mag < 0.5 * k || mag > 2.0 * k)
            continue;
        double cosang = m.dot(dir) / mag;
        if (std::acos(std::clamp(cosang, -1.0, 1.0)) <= angle)
            inside += mass;
    }
    return total > 0.0 ? inside / total : 0.0;
}

namespace {

struct StepPlan {
    double dt;
    int stride;
    int store_count;
};

StepPlan plan_steps(const SpectralBasis& basis, double T, double dt_target, int store_count) {
    if (!(T > 0.0) || !(dt_target > 0.0) || store_count < 1)
        throw invalid_input_error("wave stepper: need T > 0, dt > 0, store_count >= 1");
    if (dt_target > 0.5 / basis.lambda_max())
        throw invalid_input_error("wave stepper: dt exceeds the stability bound 0.5/lambda_max");
    double sample_dt = T / store_count;
    int stride = std::max(1, (int)std::ceil(sample_dt / dt_target - 1e-12));
    return {sample_dt / stride, stride, store_count};
}

} // namespace

WaveTrajectory solve_potential(const CollocationGrid& grid, const CauchyPair& init,
                               const RealGrid& c, double T, double dt_target, int store_count) {
    const SpectralBasis& basis = grid.basis();
    if ((int)c.size() != grid.n_points())
        throw aliasing_error("solve_potential: potential not sampled on this grid");
    StepPlan plan = plan_steps(basis, T, dt_target, store_count);
    const double dt = plan.dt;

    const bool nonneg_c = c.minCoeff() >= 0.0;
    auto acc = [&](const ScalarField& v) -> ScalarField {
        ScalarField a = (-(basis.kappa()) * v.array()).matrix();
        a -= multiply_function(grid, v, c);
        return a;
    };

    WaveTrajectory out;
    out.dt = dt;
    out.times.reserve(plan.store_count + 1);
    out.states.reserve(plan.store_count + 1);

    ScalarField v = init.v0, w = init.v1;
    out.times.push_back(0.0);
    out.states.push_back({v, w});
    double e0 = nonneg_c ? energy_c(grid, init, c) : 0.0;

    ScalarField a = acc(v);
    for (int sample = 1; sample <= plan.store_count; ++sample) {
        for (int step = 0; step < plan.stride; ++step) {
            w += 0.5 * dt * a;
            v += dt * w;
            a = acc(v);
            w += 0.5 * dt * a;
        }
        out.times.push_back(sample * T / plan.store_count);
        out.states.push_back({v, w});
        if (nonneg_c && e0 > 0.0) {
            double e = energy_c(grid, out.states.back(), c);
            if (e > 10.0 * e0)
                throw stability_error("solve_potential: energy grew by more than 10x");
        }
    }
    return out;
}

WaveTrajectory solve_damped(const CollocationGrid& grid, const CauchyPair& init,
                            const RealGrid& b0, double T, double dt_target, int store_count) {
    const SpectralBasis& basis = grid.basis();
    if ((int)b0.size() != grid.n_points())
        throw aliasing_error("solve_damped: damping not sampled on this grid");
    StepPlan plan = plan_steps(basis, T, dt_target, store_count);
    const double dt = plan.dt;

    // Kick over dt/2 with v frozen, damping handled by implicit midpoint:
    //   w+ = [(1 - dt b0/4) w + (dt/2) Laplace v] / (1 + dt b0/4), pointwise.
    RealGrid denom = (1.0 + 0.25 * dt * b0.array()).matrix();
    RealGrid numer = (1.0 - 0.25 * dt * b0.array()).matrix();

    auto kick = [&](ScalarField& w, const ScalarField& v) {
        GridField wg = grid.to_grid(w);
        GridField lg = grid.to_grid((-(basis.kappa()) * v.array()).matrix());
        wg.array() = (numer.array() * wg.array() + 0.5 * dt * lg.array()) / denom.array();
        w = grid.from_grid(wg);
    };

    WaveTrajectory out;
    out.dt = dt;
    out.times.push_back(0.0);
    out.states.push_back(init);

    ScalarField v = init.v0, w = init.v1;
    double e0 = energy(basis, init, 1.0);
    for (int sample = 1; sample <= plan.store_count; ++sample) {
        for (int step = 0; step < plan.stride; ++step) {
            kick(w, v);
            v += dt * w;
            kick(w, v);
        }
        out.times.push_back(sample * T / plan.store_count);
        out.states.push_back({v, w});
        if (b0.minCoeff() >= 0.0 && e0 > 0.0 &&
            energy(basis, out.states.back(), 1.0) > 10.0 * e0)
            throw stability_error("solve_damped: energy grew by more than 10x");
    }
    return out;
}

} // namespace wavegcc
