#include <doctest.h>

#include "wavegcc/spectral.hpp"
#include "wavegcc/errors.hpp"

#include <cmath>
#include <random>

using namespace wavegcc;

namespace {

ScalarField random_field(const SpectralBasis& basis, std::mt19937_64& rng, int band = -1) {
    std::normal_distribution<double> gauss;
    ScalarField v = ScalarField::Zero(basis.n_modes());
    for (int idx = 0; idx < basis.n_modes(); ++idx) {
        auto [k1, k2] = basis.mode_of(idx);
        if (band >= 0 && (std::abs(k1) > band || std::abs(k2) > band))
            continue;
        v[idx] = std::complex<double>(gauss(rng), gauss(rng));
    }
    return v;
}

CauchyPair random_pair(const SpectralBasis& basis, std::mt19937_64& rng, int band = -1) {
    return {random_field(basis, rng, band), random_field(basis, rng, band)};
}

} // namespace

TEST_CASE("basis bookkeeping") {
    SpectralBasis basis(4, 1.0, 2.0);
    CHECK(basis.n_modes() == 81);
    int idx = basis.index_of(3, -2);
    auto [k1, k2] = basis.mode_of(idx);
    CHECK(k1 == 3);
    CHECK(k2 == -2);
    double expect = 4.0 * M_PI * M_PI * (9.0 + 4.0 / 4.0);
    CHECK(basis.kappa()[idx] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(basis.lambda()[idx] == doctest::Approx(std::sqrt(expect + 1.0)).epsilon(1e-14));
    CHECK(friendly_grid_size(34) == 36);
    CHECK(friendly_grid_size(258) == 270);
}

TEST_CASE("grid transforms round trip and sample plane waves") {
    SpectralBasis basis(6);
    CollocationGrid grid(basis);
    std::mt19937_64 rng(1);
    ScalarField v = random_field(basis, rng);
    ScalarField w = grid.from_grid(grid.to_grid(v));
    CHECK((w - v).norm() < 1e-12 * v.norm());

    // a single mode lands on the expected exponential values
    ScalarField e = ScalarField::Zero(basis.n_modes());
    e[basis.index_of(2, -1)] = 1.0;
    GridField g = grid.to_grid(e);
    Vec2 x = grid.point(3, 5);
    std::complex<double> expect =
        std::exp(std::complex<double>(0.0, 2.0 * M_PI * (2.0 * x[0] - 1.0 * x[1])));
    CHECK(std::abs(g[(size_t)3 * grid.size() + 5] - expect) < 1e-12);
}

TEST_CASE("apply_lambda_s") {
    SpectralBasis basis(5);
    std::mt19937_64 rng(2);
    ScalarField v = random_field(basis, rng);

    CHECK((apply_lambda_s(basis, v, 0.0) - v).norm() == 0.0);

    int idx = basis.index_of(3, 1);
    ScalarField e = ScalarField::Zero(basis.n_modes());
    e[idx] = 2.0;
    ScalarField le = apply_lambda_s(basis, e, 1.4);
    CHECK(std::abs(le[idx] - 2.0 * std::pow(basis.kappa()[idx] + 1.0, 0.7)) < 1e-12);

    ScalarField rt = apply_lambda_s(basis, apply_lambda_s(basis, v, 0.8), -0.8);
    CHECK((rt - v).norm() < 1e-12 * v.norm());

    CHECK(hs_norm(basis, v, 1.3) ==
          doctest::Approx(apply_lambda_s(basis, v, 1.3).norm()).epsilon(1e-12));
}

TEST_CASE("splitting is the exact inverse pair and an isometry") {
    SpectralBasis basis(6);
    std::mt19937_64 rng(3);

    CauchyPair v = random_pair(basis, rng);
    SplitPair s = split_sigma(basis, v);
    CauchyPair back = unsplit_sigma(basis, s);
    CHECK((back.v0 - v.v0).norm() < 1e-13 * v.v0.norm());
    CHECK((back.v1 - v.v1).norm() < 1e-13 * v.v1.norm());

    CauchyPair rest{v.v0, ScalarField::Zero(basis.n_modes())};
    SplitPair sr = split_sigma(basis, rest);
    CHECK((sr.vp - 0.5 * v.v0).norm() < 1e-14 * v.v0.norm());
    CHECK((sr.vm - 0.5 * v.v0).norm() < 1e-14 * v.v0.norm());

    for (double sval : {0.0, 1.0, -0.5}) {
        double lhs = std::pow(hs_norm(basis, s.vp, sval), 2) + std::pow(hs_norm(basis, s.vm, sval), 2);
        CHECK(lhs == doctest::Approx(energy(basis, v, sval)).epsilon(1e-12));
    }
}

TEST_CASE("free propagation is exact, unitary, and a group") {
    SpectralBasis basis(6);
    std::mt19937_64 rng(4);
    ScalarField v = random_field(basis, rng);

    CHECK((propagate_free(basis, v, 0.0, +1) - v).norm() == 0.0);
    for (double s : {0.0, 1.0, 2.5})
        CHECK(hs_norm(basis, propagate_free(basis, v, 1.7, +1), s) ==
              doctest::Approx(hs_norm(basis, v, s)).epsilon(1e-12));
    ScalarField a = propagate_free(basis, propagate_free(basis, v, 0.4, +1), 1.1, +1);
    ScalarField b = propagate_free(basis, v, 1.5, +1);
    CHECK((a - b).norm() < 1e-12 * v.norm());

    // free Klein-Gordon conserves every E_s exactly
    CauchyPair p = random_pair(basis, rng);
    CauchyPair pt = propagate_free_pair(basis, p, 2.9);
    CHECK(energy(basis, pt, 1.0) == doctest::Approx(energy(basis, p, 1.0)).epsilon(1e-12));
}

TEST_CASE("multiply_function convolution and adjointness") {
    SpectralBasis basis(6);
    CollocationGrid grid(basis);

    RealGrid ones = RealGrid::Ones(grid.n_points());
    std::mt19937_64 rng(5);
    ScalarField v = random_field(basis, rng);
    CHECK((multiply_function(grid, v, ones) - v).norm() < 1e-12 * v.norm());

    RealGrid cosx = grid.sample([](const Vec2& x) { return std::cos(2.0 * M_PI * x[0]); });
    ScalarField e = ScalarField::Zero(basis.n_modes());
    e[basis.index_of(2, 1)] = 1.0;
    ScalarField fe = multiply_function(grid, e, cosx);
    CHECK(std::abs(fe[basis.index_of(3, 1)] - 0.5) < 1e-12);
    CHECK(std::abs(fe[basis.index_of(1, 1)] - 0.5) < 1e-12);
    fe[basis.index_of(3, 1)] = 0.0;
    fe[basis.index_of(1, 1)] = 0.0;
    CHECK(fe.norm() < 1e-12);

    RealGrid f = grid.sample([](const Vec2& x) {
        return 1.0 + 0.5 * std::sin(2.0 * M_PI * x[0]) * std::cos(4.0 * M_PI * x[1]);
    });
    ScalarField w = random_field(basis, rng);
    std::complex<double> lhs = multiply_function(grid, v, f).dot(w);
    std::complex<double> rhs = v.dot(multiply_function(grid, w, f));
    CHECK(std::abs(lhs - rhs) < 1e-10 * std::abs(lhs));
}

TEST_CASE("energies") {
    SpectralBasis basis(6);
    CollocationGrid grid(basis);

    CauchyPair zero{ScalarField::Zero(basis.n_modes()), ScalarField::Zero(basis.n_modes())};
    CHECK(energy(basis, zero, 1.0) == 0.0);

    int idx = basis.index_of(2, -3);
    CauchyPair mono = zero;
    mono.v0[idx] = 1.0;
    CHECK(energy(basis, mono, 1.0) ==
          doctest::Approx(0.5 * (basis.kappa()[idx] + 1.0)).epsilon(1e-14));

    // E_1 <= (1 + 1/delta) E_c for c = delta + c0, c0 >= 0
    double delta = 0.35;
    RealGrid c = grid.sample([&](const Vec2& x) {
        return delta + 1.0 + std::cos(2.0 * M_PI * x[0]) * std::sin(2.0 * M_PI * x[1]);
    });
    CHECK(c.minCoeff() >= delta - 1e-12);
    std::mt19937_64 rng(6);
    for (int i = 0; i < 10; ++i) {
        CauchyPair v = random_pair(basis, rng);
        CHECK(energy(basis, v, 1.0) <= (1.0 + 1.0 / delta) * energy_c(grid, v, c) + 1e-9);
    }
}

TEST_CASE("frequency shells") {
    SpectralBasis basis(8);
    std::mt19937_64 rng(7);
    CauchyPair v = random_pair(basis, rng);

    CauchyPair same = shell_project(basis, v, -1.0);
    CHECK((same.v0 - v.v0).norm() == 0.0);

    double kappa = 150.0;
    CauchyPair hi = shell_project(basis, v, kappa);
    CHECK(shell_member(basis, hi, kappa));
    // complementary projection of the projection is zero
    for (int idx = 0; idx < basis.n_modes(); ++idx)
        if (basis.kappa()[idx] <= kappa)
            CHECK(std::abs(hi.v0[idx]) == 0.0);

    // shell energy inequality E_{s-1/2} <= (kappa+1)^{-1/2} E_s, exact
    for (double s : {0.5, 1.0}) {
        double lhs = energy(basis, hi, s - 0.5);
        double rhs = std::pow(kappa + 1.0, -0.5) * energy(basis, hi, s);
        CHECK(lhs <= rhs + 1e-12);
    }
}

TEST_CASE("gaussian beam: normalization and concentration") {
    SpectralBasis basis(128);
    CollocationGrid grid(basis);
    PhasePoint rho0{{0.4, 0.55}, {std::cos(0.6), std::sin(0.6)}};
    ScalarField beam = gaussian_beam(grid, rho0, 32, 1.0);
    CHECK(hs_norm(basis, beam, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(beam_concentration(basis, beam, rho0.xi, 32, 1.0, M_PI / 8.0) >= 0.95);

    CHECK_THROWS_AS((void)gaussian_beam(grid, rho0, 100, 1.0), resolution_error);
}

TEST_CASE("gaussian beam symbol convergence") {
    SpectralBasis basis(128);
    CollocationGrid grid(basis);
    PhasePoint rho0{{0.3, 0.7}, {1.0, 0.0}};
    auto a_fun = [](const Vec2& x) {
        return 1.5 + 0.8 * std::cos(2.0 * M_PI * x[0]) * std::sin(2.0 * M_PI * x[1]) +
               0.3 * std::sin(2.0 * M_PI * x[1]);
    };
    RealGrid a = grid.sample(a_fun);
    double target = a_fun(rho0.x);
    double s = 1.0;
    auto symbol_value = [&](int k) {
        ScalarField beam = gaussian_beam(grid, rho0, k, s);
        ScalarField ab = multiply_function(grid, beam, a);
        // (A v, v)_{H^s}
        std::complex<double> ip =
            (apply_lambda_s(basis, ab, s).adjoint() * apply_lambda_s(basis, beam, s))(0);
        return ip.real();
    };
    double err16 = std::abs(symbol_value(16) - target);
    double err64 = std::abs(symbol_value(64) - target);
    CHECK(err64 <= 0.5 * err16);
    CHECK(err16 < 0.2);
}

TEST_CASE("solve_potential: Klein-Gordon case matches exact propagation") {
    SpectralBasis basis(8);
    CollocationGrid grid(basis);
    std::mt19937_64 rng(8);
    CauchyPair init = random_pair(basis, rng, 3);
    RealGrid one = RealGrid::Ones(grid.n_points());

    auto traj = solve_potential(grid, init, one, 1.0, 5e-4, 4);
    CauchyPair exact = propagate_free_pair(basis, init, 1.0);
    double scale = std::sqrt(2.0 * energy(basis, init, 1.0));
    double err = std::sqrt(2.0 * energy(basis,
                                        {traj.states.back().v0 - exact.v0,
                                         traj.states.back().v1 - exact.v1},
                                        1.0));
    CHECK(err / scale < 5e-4);
}

TEST_CASE("solve_potential: harmonic oscillator per mode") {
    SpectralBasis basis(6);
    CollocationGrid grid(basis);
    double gamma = 3.0;
    RealGrid c = RealGrid::Constant(grid.n_points(), gamma);

    CauchyPair init{ScalarField::Zero(basis.n_modes()), ScalarField::Zero(basis.n_modes())};
    int i1 = basis.index_of(2, -1), i2 = basis.index_of(0, 0);
    init.v0[i1] = 1.0;
    init.v1[i1] = std::complex<double>(0.0, 0.5);
    init.v0[i2] = 0.7;

    double T = 0.8;
    auto traj = solve_potential(grid, init, c, T, 4e-4, 2);
    for (int idx : {i1, i2}) {
        double om = std::sqrt(basis.kappa()[idx] + gamma);
        std::complex<double> expect =
            init.v0[idx] * std::cos(om * T) + init.v1[idx] * std::sin(om * T) / om;
        CHECK(std::abs(traj.states.back().v0[idx] - expect) < 5e-5);
    }
}

TEST_CASE("solve_potential: negative constant potential grows like cosh(sqrt(r) t)") {
    SpectralBasis basis(4);
    CollocationGrid grid(basis);
    double r = 100.0;
    RealGrid c = RealGrid::Constant(grid.n_points(), -r);

    CauchyPair init{ScalarField::Zero(basis.n_modes()), ScalarField::Zero(basis.n_modes())};
    init.v0[basis.index_of(0, 0)] = 1.0;
    init.v0[basis.index_of(1, 0)] = 0.3;

    double T = 0.8; // sqrt(r) T = 8
    auto traj = solve_potential(grid, init, c, T, 2e-4, 4);
    auto e1 = [&](const CauchyPair& v) { return energy(basis, v, 1.0); };
    double rate = std::log(e1(traj.states[4]) / e1(traj.states[2])) / (2.0 * (T / 2.0));
    CHECK(std::abs(rate - std::sqrt(r)) / std::sqrt(r) < 0.02);
}

TEST_CASE("stepper is second order against a fine reference") {
    SpectralBasis basis(6);
    CollocationGrid grid(basis);
    RealGrid c = grid.sample([](const Vec2& x) {
        return 2.0 + std::cos(2.0 * M_PI * x[0]) + 0.5 * std::sin(2.0 * M_PI * x[1]);
    });
    std::mt19937_64 rng(9);
    CauchyPair init = random_pair(basis, rng, 2);

    double T = 0.5, dt = 2e-3;
    auto diff = [&](const CauchyPair& a, const CauchyPair& b) {
        return std::sqrt(2.0 * energy(basis, {a.v0 - b.v0, a.v1 - b.v1}, 1.0));
    };
    auto ref = solve_potential(grid, init, c, T, dt / 8.0, 1).states.back();
    double e1 = diff(solve_potential(grid, init, c, T, dt, 1).states.back(), ref);
    double e2 = diff(solve_potential(grid, init, c, T, dt / 2.0, 1).states.back(), ref);
    double ratio = e1 / e2;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("stability guards") {
    SpectralBasis basis(8);
    CollocationGrid grid(basis);
    RealGrid c = RealGrid::Ones(grid.n_points());
    std::mt19937_64 rng(10);
    CauchyPair init = random_pair(basis, rng, 2);
    CHECK_THROWS_AS((void)solve_potential(grid, init, c, 1.0, 0.1, 4), invalid_input_error);
}

TEST_CASE("solve_damped: zero damping matches the free massless wave") {
    SpectralBasis basis(6);
    CollocationGrid grid(basis);
    RealGrid zero = RealGrid::Zero(grid.n_points());
    std::mt19937_64 rng(11);
    CauchyPair init = random_pair(basis, rng, 2);

    double T = 0.7;
    auto traj = solve_damped(grid, init, zero, T, 4e-4, 1);
    // massless closed form per mode: omega = sqrt(kappa)
    for (int idx : {basis.index_of(1, 1), basis.index_of(2, 0)}) {
        double om = std::sqrt(basis.kappa()[idx]);
        std::complex<double> expect =
            init.v0[idx] * std::cos(om * T) + init.v1[idx] * std::sin(om * T) / om;
        CHECK(std::abs(traj.states.back().v0[idx] - expect) < 5e-5);
    }
}

TEST_CASE("solve_damped: constant damping decays every mode like exp(-a t)") {
    SpectralBasis basis(8);
    CollocationGrid grid(basis);
    double a = 0.5;
    RealGrid b0 = RealGrid::Constant(grid.n_points(), a);

    CauchyPair init{ScalarField::Zero(basis.n_modes()), ScalarField::Zero(basis.n_modes())};
    int hi = basis.index_of(6, 0);
    init.v0[hi] = 1.0;

    double T = 2.0;
    auto traj = solve_damped(grid, init, b0, T, 5e-4, 2);
    auto mode_energy = [&](const CauchyPair& v) {
        return 0.5 * (std::norm(v.v1[hi]) + (basis.kappa()[hi] + 1.0) * std::norm(v.v0[hi]));
    };
    double rate = -std::log(mode_energy(traj.states[2]) / mode_energy(traj.states[1])) / (T / 2.0);
    CHECK(std::abs(rate - a) / a < 0.03);

    // energy is nonincreasing for b0 >= 0 (zero-mean data)
    double e_start = energy(basis, traj.states.front(), 1.0);
    double e_end = energy(basis, traj.states.back(), 1.0);
    CHECK(e_end <= e_start * (1.0 + 1e-6));
}
