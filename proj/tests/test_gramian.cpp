#include <doctest.h>

#include "wavegcc/gramian.hpp"
#include "wavegcc/errors.hpp"

#include <cmath>
#include <random>

using namespace wavegcc;

namespace {

const std::complex<double> I(0.0, 1.0);

ObservationFunction disk_complement() {
    return ObservationFunction({BallComplementBump{{0.5, 0.5}, 0.25, 0.3}});
}

ObservationFunction wide_ball() {
    return ObservationFunction({BallBump{{0.5, 0.5}, 0.75, 0.85}}); // b == 1 on the unit torus
}

RealGrid sample_b(const CollocationGrid& grid, const ObservationFunction& b,
                  const ManifoldModel& M) {
    return grid.sample([&](const Vec2& x) { return b.evaluate(M, x); });
}

SplitPair random_split(const SpectralBasis& basis, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    SplitPair v{ScalarField(basis.n_modes()), ScalarField(basis.n_modes())};
    for (int i = 0; i < basis.n_modes(); ++i) {
        v.vp[i] = std::complex<double>(gauss(rng), gauss(rng));
        v.vm[i] = std::complex<double>(gauss(rng), gauss(rng));
    }
    return v;
}

// Simpson quadrature factor S(mu) = sum_j w_j exp(i t_j mu), independent
// reimplementation for oracles.
std::complex<double> quad_factor(double T, int n_time, double mu) {
    SimpsonRule rule = simpson_rule(T, n_time);
    std::complex<double> acc = 0.0;
    for (size_t j = 0; j < rule.nodes.size(); ++j)
        acc += rule.weights[j] * std::exp(I * (mu * rule.nodes[j]));
    return acc;
}

} // namespace

TEST_CASE("b == 1 Gramian is block diagonal per mode with the closed form") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(4);
    CollocationGrid grid(basis);
    const int n = basis.n_modes();
    double T = 1.3;
    int n_time = 64;

    GramianAssembler assembler(grid, sample_b(grid, wide_ball(), M), 1.0);
    GramianMatrix G = assembler.assemble(T, n_time);

    double T_tilde = quad_factor(T, n_time, 0.0).real();
    CHECK(T_tilde == doctest::Approx(T).epsilon(1e-14));

    double worst_diag = 0.0, worst_cross = 0.0, worst_off = 0.0;
    for (int k = 0; k < n; ++k) {
        worst_diag = std::max(worst_diag, std::abs(G.entries(k, k) - T_tilde));
        std::complex<double> sigma = quad_factor(T, n_time, 2.0 * basis.lambda()[k]);
        worst_cross = std::max(worst_cross, std::abs(G.entries(n + k, k) - sigma));
        for (int l = 0; l < n; ++l)
            if (l != k) {
                worst_off = std::max(worst_off, std::abs(G.entries(k, l)));
                worst_off = std::max(worst_off, std::abs(G.entries(n + k, l)));
            }
    }
    CHECK(worst_diag < 1e-10);
    CHECK(worst_cross < 1e-10);
    CHECK(worst_off < 1e-10);

    // smallest eigenvalue: min over modes of T - |sigma_k| (2x2 blocks)
    double expect = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k)
        expect = std::min(expect,
                          T_tilde - std::abs(quad_factor(T, n_time, 2.0 * basis.lambda()[k])));
    EigResult eig = min_eig(G, basis);
    CHECK(eig.value == doctest::Approx(expect).epsilon(1e-9));

    // T = 0 gives the zero matrix
    CHECK(assembler.assemble(0.0, n_time).entries.norm() == 0.0);

    // shell restriction can only raise the bottom of the spectrum
    EigResult shell = min_eig(G, basis, 200.0);
    CHECK(shell.value >= eig.value - 1e-10);
}

TEST_CASE("dense Gramian: Hermitian, PSD, dual-route quadratic form") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(4);
    CollocationGrid grid(basis);
    auto b = disk_complement();
    double T = 0.8;
    int n_time = 64;

    GramianAssembler assembler(grid, sample_b(grid, b, M), 1.0);
    GramianMatrix G = assembler.assemble(T, n_time);

    double scale = G.entries.norm();
    CHECK((G.entries - G.entries.adjoint()).norm() <= 1e-10 * scale);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G.entries);
    CHECK(es.eigenvalues()[0] >= -1e-10 * es.eigenvalues().maxCoeff());

    std::mt19937_64 rng(42);
    for (int draw = 0; draw < 10; ++draw) {
        SplitPair v = random_split(basis, rng);
        Eigen::VectorXcd phi = split_to_weighted(basis, v, 1.0);
        double via_matrix = phi.dot(G.entries * phi).real();
        double direct = assembler.direct_quadratic_form(v, T, n_time);
        CHECK(via_matrix == doctest::Approx(direct).epsilon(1e-10));
    }
}

TEST_CASE("toy cutoff matches a brute-force assembly and refined quadrature") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(2);
    CollocationGrid grid(basis);
    auto b = disk_complement();
    RealGrid bg = sample_b(grid, b, M);
    double T = 0.5;

    GramianAssembler assembler(grid, bg, 1.0);
    GramianMatrix G = assembler.assemble(T, 256);

    // brute force: build the matrix column by column through the observation map
    const int n = basis.n_modes();
    SimpsonRule rule = simpson_rule(T, 256);
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    Eigen::ArrayXd w_inv = (basis.kappa() + 1.0).pow(-0.5);
    for (int col = 0; col < 2 * n; ++col) {
        SplitPair e{ScalarField::Zero(n), ScalarField::Zero(n)};
        if (col < n)
            e.vp[col] = w_inv[col];
        else
            e.vm[col - n] = w_inv[col - n];
        for (int col2 = 0; col2 <= col; ++col2) {
            SplitPair f{ScalarField::Zero(n), ScalarField::Zero(n)};
            if (col2 < n)
                f.vp[col2] = w_inv[col2];
            else
                f.vm[col2 - n] = w_inv[col2 - n];
            std::complex<double> acc = 0.0;
            for (size_t j = 0; j < rule.nodes.size(); ++j) {
                ScalarField ve = propagate_free(basis, e.vp, rule.nodes[j], +1) +
                                 propagate_free(basis, e.vm, rule.nodes[j], -1);
                ScalarField vf = propagate_free(basis, f.vp, rule.nodes[j], +1) +
                                 propagate_free(basis, f.vm, rule.nodes[j], -1);
                ScalarField be = multiply_function(grid, ve, bg);
                ScalarField bf = multiply_function(grid, vf, bg);
                acc += rule.weights[j] *
                       apply_lambda_s(basis, be, 1.0).dot(apply_lambda_s(basis, bf, 1.0));
            }
            // acc = sum_j w_j (obs of col)^H (obs of col2) = entry (col, col2)
            B(col, col2) = acc;
            B(col2, col) = std::conj(acc);
        }
    }
    CHECK((G.entries - B).norm() <= 1e-8 * B.norm());

    // quadrature refinement: 4x nodes changes nothing at this resolved cutoff
    GramianMatrix G4 = assembler.assemble(T, 1024);
    CHECK((G.entries - G4.entries).norm() <= 1e-8 * G.entries.norm());

    // dense full diagonalization for the smallest pair (dim 50)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G.entries);
    EigResult eig = min_eig(G, basis);
    CHECK(eig.value == doctest::Approx(es.eigenvalues()[0]).epsilon(1e-10));
}

TEST_CASE("matrix-free operator agrees with the dense assembly") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(4);
    CollocationGrid grid(basis);
    auto b = disk_complement();
    RealGrid bg = sample_b(grid, b, M);
    double T = 0.8;
    int n_time = 64;

    GramianAssembler assembler(grid, bg, 1.0);
    GramianMatrix G = assembler.assemble(T, n_time);
    GramianOperator op(grid, bg, 1.0, T, n_time);

    std::mt19937_64 rng(7);
    for (int draw = 0; draw < 5; ++draw) {
        Eigen::VectorXcd phi = split_to_weighted(basis, random_split(basis, rng), 1.0);
        Eigen::VectorXcd a = op.apply(phi);
        Eigen::VectorXcd d = G.entries * phi;
        CHECK((a - d).norm() <= 1e-10 * d.norm());
    }

    Eigen::VectorXd diag_op = op.diagonal();
    Eigen::VectorXd diag_dense = G.entries.diagonal().real();
    CHECK((diag_op - diag_dense).norm() <= 1e-8 * diag_dense.norm());

    // Lanczos on the operator matches the dense bottom eigenvalue
    EigResult dense_eig = min_eig(G, basis);
    EigResult op_eig = min_eig_operator(op, 1e-9, 400, false);
    CHECK(op_eig.value == doctest::Approx(dense_eig.value).epsilon(1e-6));

    // shell masking matches the dense submatrix restriction
    double kappa = 100.0;
    op.set_shell(kappa);
    EigResult shell_op = min_eig_operator(op, 1e-9, 400, false);
    EigResult shell_dense = min_eig(G, basis, kappa);
    CHECK(shell_op.value == doctest::Approx(shell_dense.value).epsilon(1e-6));
}

TEST_CASE("hum control: b == 1 cost oracle, linearity, and exact steering") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(6);
    CollocationGrid grid(basis);
    RealGrid bg = sample_b(grid, wide_ball(), M);
    const int n = basis.n_modes();
    double T = 1.0;
    int n_time = 64;

    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    CauchyPair data{ScalarField::Zero(n), ScalarField::Zero(n)};
    for (int idx = 0; idx < n; ++idx) {
        auto [k1, k2] = basis.mode_of(idx);
        if (std::abs(k1) <= 3 && std::abs(k2) <= 3) {
            data.v0[idx] = std::complex<double>(gauss(rng), gauss(rng));
            data.v1[idx] = std::complex<double>(gauss(rng), gauss(rng));
        }
    }

    HumResult res = hum_control(grid, bg, data, T, 1.0, n_time, 1e-10);
    CHECK(res.final_E0 <= 1e-9 * res.initial_E0);

    // per-mode closed form: G restricted to mode k is [[T, conj(s)],[s, T]]
    double cost_oracle = 0.0;
    double T_tilde = quad_factor(T, n_time, 0.0).real();
    for (int idx = 0; idx < n; ++idx) {
        double lam = basis.lambda()[idx];
        double w_inv = std::pow(basis.kappa()[idx] + 1.0, -0.5);
        std::complex<double> dp = w_inv * (-data.v1[idx] - I * lam * data.v0[idx]);
        std::complex<double> dm = w_inv * (-data.v1[idx] + I * lam * data.v0[idx]);
        std::complex<double> sig = quad_factor(T, n_time, 2.0 * lam);
        Eigen::Matrix2cd Gk;
        Gk << T_tilde, std::conj(sig), sig, T_tilde;
        Eigen::Vector2cd dk(dp, dm);
        Eigen::Vector2cd phik = Gk.fullPivLu().solve(dk);
        cost_oracle += (dk.dot(phik)).real();
    }
    CHECK(res.cost == doctest::Approx(cost_oracle).epsilon(1e-6));

    // zero data: zero control
    CauchyPair zero{ScalarField::Zero(n), ScalarField::Zero(n)};
    HumResult rz = hum_control(grid, bg, zero, T, 1.0, n_time, 1e-10);
    CHECK(rz.cost == 0.0);
    CHECK(rz.final_E0 == 0.0);

    // cost scales quadratically in the data, exactly
    CauchyPair twice{2.0 * data.v0, 2.0 * data.v1};
    HumResult r2 = hum_control(grid, bg, twice, T, 1.0, n_time, 1e-10);
    CHECK(r2.cost == doctest::Approx(4.0 * res.cost).epsilon(1e-8));
}

TEST_CASE("hum control steers a localized observation problem") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(6);
    CollocationGrid grid(basis);
    auto b = disk_complement();
    RealGrid bg = sample_b(grid, b, M);
    const int n = basis.n_modes();

    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss;
    CauchyPair data{ScalarField::Zero(n), ScalarField::Zero(n)};
    for (int idx = 0; idx < n; ++idx) {
        auto [k1, k2] = basis.mode_of(idx);
        if (std::abs(k1) <= 2 && std::abs(k2) <= 2) {
            data.v0[idx] = std::complex<double>(gauss(rng), gauss(rng));
            data.v1[idx] = std::complex<double>(gauss(rng), gauss(rng));
        }
    }
    HumResult res = hum_control(grid, bg, data, 1.0, 1.0, 64, 1e-10);
    CHECK(res.final_E0 <= 1e-8 * res.initial_E0);
    CHECK(res.cg_iterations > 0);
    CHECK(res.control.size() == 65);
}

TEST_CASE("potential Gramian: Klein-Gordon case matches the free assembly") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(3);
    CollocationGrid grid(basis);
    RealGrid bg = sample_b(grid, wide_ball(), M);
    RealGrid c1 = RealGrid::Ones(grid.n_points());
    double T = 0.5;
    int n_time = 64;

    GramianMatrix Gp = assemble_gramian_potential(grid, bg, c1, T, 1.0, 2e-4, n_time);
    GramianAssembler assembler(grid, bg, 1.0);
    GramianMatrix Gf = assembler.assemble(T, n_time);
    CHECK((Gp.entries - Gf.entries).norm() <= 1e-4 * Gf.entries.norm());

    double scale = Gp.entries.norm();
    CHECK((Gp.entries - Gp.entries.adjoint()).norm() <= 1e-10 * scale);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Gp.entries);
    CHECK(es.eigenvalues()[0] >= -1e-10 * es.eigenvalues().maxCoeff());
}

TEST_CASE("potential Gramian: quadratic form against a direct simulation") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(3);
    CollocationGrid grid(basis);
    auto b = disk_complement();
    RealGrid bg = sample_b(grid, b, M);
    RealGrid c = grid.sample([](const Vec2& x) {
        return 2.0 + std::cos(2.0 * M_PI * x[0]);
    });
    double T = 0.5;
    int n_time = 64;

    GramianMatrix G = assemble_gramian_potential(grid, bg, c, T, 1.0, 2e-4, n_time);

    std::mt19937_64 rng(17);
    SplitPair v = random_split(basis, rng);
    Eigen::VectorXcd phi = split_to_weighted(basis, v, 1.0);
    double via_matrix = phi.dot(G.entries * phi).real();

    CauchyPair init = unsplit_sigma(basis, v);
    auto traj = solve_potential(grid, init, c, T, 2e-4, n_time);
    SimpsonRule rule = simpson_rule(T, n_time);
    Eigen::ArrayXcd d1(basis.n_modes()), d2(basis.n_modes());
    for (int idx = 0; idx < basis.n_modes(); ++idx) {
        auto [k1, k2] = basis.mode_of(idx);
        d1[idx] = I * (2.0 * M_PI * k1);
        d2[idx] = I * (2.0 * M_PI * k2);
    }
    double direct = 0.0;
    for (size_t j = 0; j < rule.nodes.size(); ++j) {
        const ScalarField& vt = traj.states[j].v0;
        double n0 = multiply_function(grid, vt, bg).norm();
        double n1 = multiply_function(grid, (vt.array() * d1).matrix(), bg).norm();
        double n2 = multiply_function(grid, (vt.array() * d2).matrix(), bg).norm();
        direct += rule.weights[j] * (n0 * n0 + n1 * n1 + n2 * n2);
    }
    CHECK(via_matrix == doctest::Approx(direct).epsilon(1e-6));
}

TEST_CASE("egorov probe") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    SpectralBasis basis(128);
    CollocationGrid grid(basis);
    auto a_fun = [](const Vec2& x) {
        return 1.2 + 0.7 * std::cos(2.0 * M_PI * x[0]) * std::cos(2.0 * M_PI * x[1]) +
               0.4 * std::sin(2.0 * M_PI * x[1]);
    };
    PhasePoint rho0 = M.cosphere_point({0.25, 0.65}, 0.85);
    double t = 0.6;

    // a == 1: numeric equals 1 exactly up to roundoff, any k
    auto one = [](const Vec2&) { return 1.0; };
    EgorovResult r1 = egorov_probe(M, grid, one, t, rho0, 16);
    CHECK(r1.error < 1e-10);

    EgorovResult e16 = egorov_probe(M, grid, a_fun, t, rho0, 16);
    EgorovResult e64 = egorov_probe(M, grid, a_fun, t, rho0, 64);
    CHECK(e64.error <= 0.7 * e16.error);
    CHECK(e16.error < 0.2);

    // t = 0 reduces to the stationary symbol test
    EgorovResult e0 = egorov_probe(M, grid, a_fun, 0.0, rho0, 32);
    CHECK(std::abs(e0.transported - a_fun(rho0.x)) == 0.0);
    CHECK(e0.error < 0.05);
}

TEST_CASE("smoothing probe") {
    auto M = ManifoldModel::flat_torus(1.0, 1.0);
    double T = 0.7, s = 1.0;

    // b == 1 closed form: off-diagonal norm max_k |sin(T lambda_k)| <= 1,
    // diagonal negative control T * lambda_max
    auto ones = wide_ball();
    SmoothingResult r1 = smoothing_probe(ones, M, T, s, 8);
    SpectralBasis b8(8);
    double expect = 0.0;
    for (int k = 0; k < b8.n_modes(); ++k)
        expect = std::max(expect, std::abs(std::sin(T * b8.lambda()[k])));
    CHECK(r1.norm == doctest::Approx(expect).epsilon(1e-6));
    CHECK(r1.norm <= 1.0 + 1e-9);
    CHECK(r1.diag_norm_b1 == doctest::Approx(T * b8.lambda_max()).epsilon(1e-12));

    // separable-kernel route matches the dense route
    auto b = disk_complement();
    SmoothingResult sep = smoothing_probe(b, M, T, s, 16); // n = 1089 > 900: separable
    SpectralBasis b16(16);
    CollocationGrid g16(b16);
    RealGrid bg = g16.sample([&](const Vec2& x) { return b.evaluate(M, x); });
    double dense = smoothing_norm_dense(g16, bg, T, s);
    CHECK(sep.norm == doctest::Approx(dense).epsilon(1e-3));
}
