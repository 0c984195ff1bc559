#include "wavegcc/gramian.hpp"
#include "wavegcc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wavegcc {

namespace {
const std::complex<double> kI(0.0, 1.0);

Eigen::ArrayXcd unit_phase(const Eigen::ArrayXd& theta) {
    return theta.unaryExpr([](double a) { return std::polar(1.0, a); });
}

Eigen::VectorXcd random_unit(int dim, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Eigen::VectorXcd v(dim);
    for (int i = 0; i < dim; ++i)
        v[i] = std::complex<double>(gauss(rng), gauss(rng));
    return v / v.norm();
}

// The multiplication operator by a real grid function, as a dense matrix on
// the truncated modes: M[k,l] = bhat(k - l) (Toeplitz in the mode lattice).
Eigen::MatrixXcd multiplication_matrix(const CollocationGrid& grid, const RealGrid& f) {
    const SpectralBasis& basis = grid.basis();
    const int n = basis.n_modes();
    Eigen::VectorXcd spec = grid.full_spectrum(f.cast<std::complex<double>>());
    const double vol = std::sqrt(basis.period1() * basis.period2());
    Eigen::MatrixXcd M(n, n);
    for (int a = 0; a < n; ++a) {
        auto [k1, k2] = basis.mode_of(a);
        for (int bcol = 0; bcol < n; ++bcol) {
            auto [l1, l2] = basis.mode_of(bcol);
            M(a, bcol) = grid.spectrum_at(spec, k1 - l1, k2 - l2) / vol;
        }
    }
    return M;
}

} // namespace

Eigen::VectorXcd split_to_weighted(const SpectralBasis& basis, const SplitPair& v, double s) {
    const int n = basis.n_modes();
    Eigen::ArrayXd w = (basis.kappa() + 1.0).pow(0.5 * s);
    Eigen::VectorXcd phi(2 * n);
    phi.head(n) = (v.vp.array() * w).matrix();
    phi.tail(n) = (v.vm.array() * w).matrix();
    return phi;
}

SplitPair weighted_to_split(const SpectralBasis& basis, const Eigen::VectorXcd& phi, double s) {
    const int n = basis.n_modes();
    Eigen::ArrayXd w = (basis.kappa() + 1.0).pow(-0.5 * s);
    SplitPair v;
    v.vp = (phi.head(n).array() * w).matrix();
    v.vm = (phi.tail(n).array() * w).matrix();
    return v;
}

// ---- dense assembly ---------------------------------------------------------

GramianAssembler::GramianAssembler(const CollocationGrid& grid, const RealGrid& b_grid, double s)
    : grid_(grid), b_(b_grid), s_(s) {
    const SpectralBasis& basis = grid.basis();
    Eigen::MatrixXcd M = multiplication_matrix(grid, b_grid);
    Eigen::ArrayXd half = (basis.kappa() + 1.0).pow(0.5 * s);
    // C = D^{s/2} M_b D^{-s/2}; btilde = C^H C
    Eigen::MatrixXcd C = M;
    C.array().colwise() *= half.cast<std::complex<double>>();
    C.array().rowwise() *= (1.0 / half).transpose().cast<std::complex<double>>();
    btilde_.noalias() = C.adjoint() * C;
}

GramianMatrix GramianAssembler::assemble(double T, int n_time) const {
    if (n_time < 64)
        throw invalid_input_error("assemble_gramian: n_time must be >= 64");
    if (T < 0.0)
        throw invalid_input_error("assemble_gramian: T must be nonnegative");
    const SpectralBasis& basis = grid_.basis();
    const int n = basis.n_modes();

    GramianMatrix G;
    G.T = T;
    G.s = s_;
    G.K_max = basis.K_max();
    G.n_time = n_time;
    G.entries = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    if (T == 0.0)
        return G;

    SimpsonRule rule = simpson_rule(T, n_time);

    // Quadrature factors S(mu) = sum_j w_j exp(i t_j mu) accumulated as
    // rank-one updates of the node phase vectors.
    Eigen::MatrixXcd t_pp = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd t_mp = Eigen::MatrixXcd::Zero(n, n);
    for (size_t j = 0; j < rule.nodes.size(); ++j) {
        Eigen::VectorXcd p = unit_phase(rule.nodes[j] * basis.lambda()).matrix();
        t_pp.noalias() += rule.weights[j] * (p.conjugate() * p.transpose());
        t_mp.noalias() += rule.weights[j] * (p * p.transpose());
    }

    G.entries.topLeftCorner(n, n) = btilde_.cwiseProduct(t_pp);
    G.entries.bottomRightCorner(n, n) = btilde_.cwiseProduct(t_pp.conjugate());
    G.entries.topRightCorner(n, n) = btilde_.cwiseProduct(t_mp.conjugate());
    G.entries.bottomLeftCorner(n, n) = btilde_.cwiseProduct(t_mp);
    return G;
}

double GramianAssembler::direct_quadratic_form(const SplitPair& v, double T, int n_time) const {
    const SpectralBasis& basis = grid_.basis();
    SimpsonRule rule = simpson_rule(T, n_time);
    double acc = 0.0;
    for (size_t j = 0; j < rule.nodes.size(); ++j) {
        ScalarField vt = propagate_free(basis, v.vp, rule.nodes[j], +1) +
                         propagate_free(basis, v.vm, rule.nodes[j], -1);
        ScalarField bv = multiply_function(grid_, vt, b_);
        double nj = hs_norm(basis, bv, s_);
        acc += rule.weights[j] * nj * nj;
    }
    return acc;
}

// ---- matrix-free operator ---------------------------------------------------

GramianOperator::GramianOperator(const CollocationGrid& grid, const RealGrid& b_grid, double s,
                                 double T, int n_time)
    : grid_(grid), b_(b_grid), s_(s), T_(T) {
    if (n_time < 64)
        throw invalid_input_error("GramianOperator: n_time must be >= 64");
    rule_ = simpson_rule(T, n_time);
    const SpectralBasis& basis = grid.basis();
    w_half_ = (basis.kappa() + 1.0).pow(0.5 * s);
    w_half_inv_ = (basis.kappa() + 1.0).pow(-0.5 * s);
    pow_s_ = (basis.kappa() + 1.0).pow(s);
    mask_ = Eigen::VectorXd::Ones(dim());
}

void GramianOperator::set_shell(std::optional<double> kappa) {
    const SpectralBasis& basis = grid_.basis();
    const int n = basis.n_modes();
    mask_ = Eigen::VectorXd::Ones(dim());
    if (!kappa)
        return;
    for (int idx = 0; idx < n; ++idx)
        if (basis.kappa()[idx] <= *kappa) {
            mask_[idx] = 0.0;
            mask_[n + idx] = 0.0;
        }
}

Eigen::VectorXcd GramianOperator::apply(const Eigen::VectorXcd& phi_in) const {
    const SpectralBasis& basis = grid_.basis();
    const int n = basis.n_modes();
    const int n_nodes = (int)rule_.nodes.size();

    Eigen::VectorXcd phi = phi_in.cwiseProduct(mask_.cast<std::complex<double>>());
    ScalarField vp = (phi.head(n).array() * w_half_inv_).matrix();
    ScalarField vm = (phi.tail(n).array() * w_half_inv_).matrix();

    // per-node results kept separate and combined in index order so the
    // accumulation is deterministic under any thread count
    Eigen::MatrixXcd node_y(n, n_nodes);
    Eigen::MatrixXcd node_phase(n, n_nodes);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int j = 0; j < n_nodes; ++j) {
        Eigen::ArrayXcd phase = unit_phase(rule_.nodes[j] * basis.lambda());
        ScalarField u = (vp.array() * phase + vm.array() * phase.conjugate()).matrix();
        GridField g = grid_.to_grid(u);
        g.array() *= b_.array();
        ScalarField mid = grid_.from_grid(g);
        mid = (mid.array() * pow_s_).matrix();
        GridField g2 = grid_.to_grid(mid);
        g2.array() *= b_.array();
        node_y.col(j) = grid_.from_grid(g2);
        node_phase.col(j) = phase.matrix();
    }

    Eigen::VectorXcd out_p = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd out_m = Eigen::VectorXcd::Zero(n);
    for (int j = 0; j < n_nodes; ++j) {
        out_p.array() += rule_.weights[j] * node_y.col(j).array() *
                         node_phase.col(j).array().conjugate();
        out_m.array() += rule_.weights[j] * node_y.col(j).array() * node_phase.col(j).array();
    }

    Eigen::VectorXcd out(2 * n);
    out.head(n) = (out_p.array() * w_half_inv_).matrix();
    out.tail(n) = (out_m.array() * w_half_inv_).matrix();
    return out.cwiseProduct(mask_.cast<std::complex<double>>());
}

Eigen::VectorXd GramianOperator::diagonal() const {
    const SpectralBasis& basis = grid_.basis();
    const int n = basis.n_modes();
    Eigen::VectorXcd spec = grid_.full_spectrum(b_.cast<std::complex<double>>());
    const double vol = basis.period1() * basis.period2();
    double t_total = 0.0;
    for (double w : rule_.weights) t_total += w;

    Eigen::VectorXd diag(2 * n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int k = 0; k < n; ++k) {
        auto [k1, k2] = basis.mode_of(k);
        double acc = 0.0;
        for (int m = 0; m < n; ++m) {
            auto [m1, m2] = basis.mode_of(m);
            acc += pow_s_[m] * std::norm(grid_.spectrum_at(spec, m1 - k1, m2 - k2)) / vol;
        }
        double value = t_total * acc * w_half_inv_[k] * w_half_inv_[k];
        diag[k] = value;
        diag[n + k] = value;
    }
    return diag.cwiseProduct(mask_).cwiseMax(0.0);
}

// ---- eigensolvers -----------------------------------------------------------

int resolved_n_time(const SpectralBasis& basis, double T, int minimum) {
    int n = (int)std::ceil(1.4 * basis.lambda_max() * T);
    n = std::max(minimum, n);
    if (n % 2) ++n;
    return n;
}

double max_eig_estimate(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
                        int dim, int iters, unsigned seed) {
    Eigen::VectorXcd v = random_unit(dim, seed);
    double lambda = 0.0;
    for (int i = 0; i < iters; ++i) {
        Eigen::VectorXcd w = apply(v);
        lambda = std::abs(v.dot(w).real());
        double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
    }
    return lambda;
}

namespace {

// Lanczos for the smallest eigenpair of a Hermitian PSD operator, run on the
// reversed spectrum c - A with full reorthogonalization.
EigResult lanczos_smallest(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
                           int dim, double tol, int max_iter, unsigned seed) {
    double lam_max = max_eig_estimate(apply, dim, 25, seed);
    double c = 1.05 * lam_max + 1e-12;

    auto apply_rev = [&](const Eigen::VectorXcd& v) { return (c * v - apply(v)).eval(); };

    std::vector<Eigen::VectorXcd> V;
    std::vector<double> alpha, beta;
    Eigen::VectorXcd v = random_unit(dim, seed + 1);
    V.push_back(v);
    Eigen::VectorXcd w;
    EigResult best;
    best.value = c;

    int m_max = std::min(max_iter, dim);
    for (int m = 0; m < m_max; ++m) {
        w = apply_rev(V[m]);
        double a = V[m].dot(w).real();
        alpha.push_back(a);
        w -= a * V[m];
        if (m > 0) w -= beta[m - 1] * V[m - 1];
        // full reorthogonalization (two passes)
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : V) w -= q.dot(w) * q;
        double b = w.norm();

        bool check_now = (m % 8 == 7) || b < 1e-14 || m == m_max - 1;
        if (check_now) {
            int mm = m + 1;
            Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(mm, mm);
            for (int i = 0; i < mm; ++i) {
                Tm(i, i) = alpha[i];
                if (i + 1 < mm) Tm(i, i + 1) = Tm(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
            int top = mm - 1; // largest of c - A = smallest of A
            double theta = es.eigenvalues()[top];
            Eigen::VectorXd s = es.eigenvectors().col(top);
            double resid = b * std::abs(s[mm - 1]);
            if (c - theta < best.value || resid < best.residual || best.iterations == 0) {
                Eigen::VectorXcd y = Eigen::VectorXcd::Zero(dim);
                for (int i = 0; i < mm; ++i) y += s[i] * V[i];
                y.normalize();
                best.value = c - theta;
                best.vector = y;
                best.iterations = mm;
                best.residual = resid;
                best.converged = resid <= tol * std::max(c, 1.0);
            }
            if (best.converged || b < 1e-14)
                break;
        }
        beta.push_back(b);
        V.push_back(w / b);
    }
    // polish the value with a Rayleigh quotient on the original operator
    if (best.vector.size() == dim) {
        Eigen::VectorXcd Av = apply(best.vector);
        best.value = best.vector.dot(Av).real();
        best.residual = (Av - best.value * best.vector).norm();
    }
    return best;
}

} // namespace

EigResult min_eig(const GramianMatrix& G, const SpectralBasis& basis,
                  std::optional<double> shell, bool throw_on_fail) {
    const int n = basis.n_modes();
    std::vector<int> keep;
    if (shell) {
        for (int idx = 0; idx < n; ++idx)
            if (basis.kappa()[idx] > *shell) {
                keep.push_back(idx);
            }
        if (keep.empty())
            throw invalid_input_error("min_eig: empty shell");
    } else {
        keep.resize(n);
        for (int i = 0; i < n; ++i) keep[i] = i;
    }
    const int m = (int)keep.size();
    Eigen::MatrixXcd A(2 * m, 2 * m);
    for (int r = 0; r < m; ++r)
        for (int ccol = 0; ccol < m; ++ccol) {
            A(r, ccol) = G.entries(keep[r], keep[ccol]);
            A(r, m + ccol) = G.entries(keep[r], n + keep[ccol]);
            A(m + r, ccol) = G.entries(n + keep[r], keep[ccol]);
            A(m + r, m + ccol) = G.entries(n + keep[r], n + keep[ccol]);
        }

    EigResult out;
    if (2 * m <= 600) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
        out.value = es.eigenvalues()[0];
        Eigen::VectorXcd v = es.eigenvectors().col(0);
        out.vector = Eigen::VectorXcd::Zero(2 * n);
        for (int i = 0; i < m; ++i) {
            out.vector[keep[i]] = v[i];
            out.vector[n + keep[i]] = v[m + i];
        }
        out.converged = true;
        return out;
    }
    auto apply = [&](const Eigen::VectorXcd& v) { return (A * v).eval(); };
    EigResult res = lanczos_smallest(apply, 2 * m, 1e-8, 400, 20240);
    if (!res.converged && throw_on_fail)
        throw eigensolver_error("min_eig: Lanczos did not converge within budget", res.value);
    out = res;
    Eigen::VectorXcd full = Eigen::VectorXcd::Zero(2 * n);
    for (int i = 0; i < m; ++i) {
        full[keep[i]] = res.vector[i];
        full[n + keep[i]] = res.vector[m + i];
    }
    out.vector = full;
    return out;
}

EigResult min_eig_operator(const GramianOperator& op, double tol, int max_iter,
                           bool throw_on_fail) {
    auto apply = [&](const Eigen::VectorXcd& v) { return op.apply(v); };
    // start inside the shell subspace: the mask is applied by the operator
    EigResult res = lanczos_smallest(apply, op.dim(), tol, max_iter, 777);
    if (!res.converged && throw_on_fail)
        throw eigensolver_error("min_eig_operator: Lanczos did not converge", res.value);
    return res;
}

// ---- observability report ----------------------------------------------------

namespace {

double beam_rayleigh_quotient(const CollocationGrid& grid, const RealGrid& b_grid, double s,
                              double T, int n_time, const ScalarField& beam) {
    const SpectralBasis& basis = grid.basis();
    SimpsonRule rule = simpson_rule(T, n_time);
    double acc = 0.0;
    for (size_t j = 0; j < rule.nodes.size(); ++j) {
        ScalarField vt = propagate_free(basis, beam, rule.nodes[j], +1);
        ScalarField bv = multiply_function(grid, vt, b_grid);
        double nj = hs_norm(basis, bv, s);
        acc += rule.weights[j] * nj * nj;
    }
    // beam is H^s-normalized, so E_s = |phi|^2 = 1
    return acc;
}

constexpr int kDenseDimLimit = 5000;

} // namespace

ObservabilityReport observability_report(const ManifoldModel& M, const ObservationFunction& b,
                                         const CollocationGrid& grid, double T, double s,
                                         int n_time, int beam_k, int nx, int na) {
    const SpectralBasis& basis = grid.basis();
    ObservabilityReport rep;
    rep.T = T;
    rep.s = s;
    rep.K_max = basis.K_max();
    rep.beam_k = beam_k;

    auto kres = K_of_T(M, b, T, nx, na);
    rep.K_of_T = kres.value;
    rep.minimizer = kres.minimizer;

    RealGrid b_grid = grid.sample([&](const Vec2& x) { return b.evaluate(M, x); });

    EigResult eig;
    if (2 * basis.n_modes() <= kDenseDimLimit) {
        GramianAssembler assembler(grid, b_grid, s);
        eig = min_eig(assembler.assemble(T, n_time), basis, std::nullopt, false);
    } else {
        GramianOperator op(grid, b_grid, s, T, n_time);
        eig = min_eig_operator(op, 1e-8, 400, false);
    }
    rep.lambda_min = eig.value;
    rep.eig_converged = eig.converged;
    rep.C_obs_discrete = eig.value > 0.0 ? 1.0 / eig.value : std::numeric_limits<double>::infinity();

    ScalarField beam = gaussian_beam(grid, rep.minimizer, beam_k, s);
    rep.beam_rayleigh = beam_rayleigh_quotient(grid, b_grid, s, T, n_time, beam);
    rep.geodesic_avg = geodesic_average(M, b, rep.minimizer, T);
    rep.tol_beam = 1.5 * std::abs(rep.beam_rayleigh - rep.geodesic_avg);
    rep.lower_bound_ok = rep.lambda_min <= rep.K_of_T + rep.tol_beam;
    return rep;
}

ShellObservabilityResult shell_observability(const ManifoldModel& M, const ObservationFunction& b,
                                             const CollocationGrid& grid, double T, double s,
                                             int n_time, const std::vector<double>& kappas,
                                             int nx, int na, unsigned seed) {
    const SpectralBasis& basis = grid.basis();
    ShellObservabilityResult out;
    out.K_of_T = K_of_T(M, b, T, nx, na).value;
    if (out.K_of_T <= 0.0)
        throw invalid_input_error("shell_observability: requires K(T) > 0");

    RealGrid b_grid = grid.sample([&](const Vec2& x) { return b.evaluate(M, x); });
    const bool dense = 2 * basis.n_modes() <= kDenseDimLimit;

    std::optional<GramianAssembler> assembler;
    std::optional<GramianMatrix> Gd;
    if (dense) {
        assembler.emplace(grid, b_grid, s);
        Gd = assembler->assemble(T, n_time);
    }

    for (double kappa : kappas) {
        ShellLevel lvl;
        lvl.kappa = kappa;
        EigResult eig;
        if (dense) {
            eig = min_eig(*Gd, basis, kappa, false);
        } else {
            GramianOperator op(grid, b_grid, s, T, n_time);
            op.set_shell(kappa);
            eig = min_eig_operator(op, 1e-8, 400, false);
        }
        lvl.lambda_min = eig.value;
        lvl.ratio_to_K = eig.value / out.K_of_T;
        out.levels.push_back(lvl);
    }

    out.ratio_nondecreasing = true;
    for (size_t i = 1; i < out.levels.size(); ++i)
        if (out.levels[i].ratio_to_K < out.levels[i - 1].ratio_to_K - 1e-6)
            out.ratio_nondecreasing = false;

    // first level whose ratio moved by < 10% of the final span
    out.stabilized_index = (int)out.levels.size() - 1;
    for (size_t i = 1; i < out.levels.size(); ++i) {
        if (std::abs(out.levels[i].ratio_to_K - out.levels[i - 1].ratio_to_K) <=
            0.1 * std::max(1e-12, out.levels.back().ratio_to_K)) {
            out.stabilized_index = (int)i;
            break;
        }
    }

    // empirical deficit constant: K E_s - q(V) <= C0 E_{s-1/2} over random
    // shell states at the first shell level
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    double kappa0 = kappas.empty() ? 0.0 : kappas.front();
    std::optional<GramianOperator> op;
    if (!dense) op.emplace(grid, b_grid, s, T, n_time);
    for (int draw = 0; draw < 20; ++draw) {
        CauchyPair v{ScalarField(basis.n_modes()), ScalarField(basis.n_modes())};
        for (int i = 0; i < basis.n_modes(); ++i) {
            v.v0[i] = std::complex<double>(gauss(rng), gauss(rng));
            v.v1[i] = std::complex<double>(gauss(rng), gauss(rng));
        }
        v = shell_project(basis, v, kappa0);
        SplitPair sp = split_sigma(basis, v);
        Eigen::VectorXcd phi = split_to_weighted(basis, sp, s);
        double q;
        if (dense)
            q = phi.dot(Gd->entries * phi).real();
        else
            q = phi.dot(op->apply(phi)).real();
        double es = phi.squaredNorm();
        double es_half = 2.0 * energy(basis, v, s - 0.5);
        double deficit = out.K_of_T * es - q;
        if (es_half > 0.0)
            out.empirical_C0 = std::max(out.empirical_C0, deficit / es_half);
    }
    return out;
}

// ---- HUM ----------------------------------------------------------------------

namespace {

// Jacobi-preconditioned conjugate gradient on a Hermitian PSD system.
int pcg(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
        const Eigen::VectorXd& diag, const Eigen::VectorXcd& rhs, Eigen::VectorXcd& x,
        double tol, int max_iter) {
    Eigen::VectorXd pre = diag.cwiseMax(1e-300);
    x = Eigen::VectorXcd::Zero(rhs.size());
    Eigen::VectorXcd r = rhs;
    Eigen::VectorXcd z = r.cwiseQuotient(pre.cast<std::complex<double>>());
    Eigen::VectorXcd p = z;
    double rz = r.dot(z).real();
    double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return 0;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXcd Ap = apply(p);
        double pAp = p.dot(Ap).real();
        if (pAp <= 0.0)
            throw ill_conditioning_error("hum_control: Gramian lost positivity in CG", pAp);
        double alphak = rz / pAp;
        x += alphak * p;
        r -= alphak * Ap;
        if (r.norm() <= tol * rhs_norm)
            return it;
        z = r.cwiseQuotient(pre.cast<std::complex<double>>());
        double rz_new = r.dot(z).real();
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return -1;
}

} // namespace

HumResult hum_control(const CollocationGrid& grid, const RealGrid& b_grid,
                      const CauchyPair& data, double T, double s, int n_time, double cg_tol) {
    const SpectralBasis& basis = grid.basis();
    const int n = basis.n_modes();
    HumResult out;
    out.initial_E0 = energy(basis, data, 0.0);

    // dual right-hand side in weighted split coordinates
    Eigen::ArrayXcd lam = basis.lambda().cast<std::complex<double>>();
    Eigen::ArrayXd w_inv = (basis.kappa() + 1.0).pow(-0.5 * s);
    Eigen::VectorXcd d(2 * n);
    d.head(n) = ((-data.v1.array() - kI * lam * data.v0.array()) * w_inv).matrix();
    d.tail(n) = ((-data.v1.array() + kI * lam * data.v0.array()) * w_inv).matrix();

    const bool dense = 2 * n <= kDenseDimLimit;
    std::optional<GramianAssembler> assembler;
    Eigen::MatrixXcd Gd;
    std::optional<GramianOperator> op;
    Eigen::VectorXd diag;
    std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)> apply;
    if (dense) {
        assembler.emplace(grid, b_grid, s);
        Gd = assembler->assemble(T, n_time).entries;
        diag = Gd.diagonal().real();
        apply = [&Gd](const Eigen::VectorXcd& v) { return (Gd * v).eval(); };
    } else {
        op.emplace(grid, b_grid, s, T, n_time);
        diag = op->diagonal();
        apply = [&op](const Eigen::VectorXcd& v) { return op->apply(v); };
    }

    Eigen::VectorXcd phi;
    int its = pcg(apply, diag, d, phi, cg_tol, 10 * 2 * n);
    if (its < 0) {
        double lmin = lanczos_smallest(apply, 2 * n, 1e-4, 80, 999).value;
        throw ill_conditioning_error("hum_control: CG did not converge within 10*dim iterations",
                                     lmin);
    }
    out.cg_iterations = its;
    out.cost = d.dot(phi).real();

    // reconstruct the control and push the state through the controlled
    // equation; the source enters at the same Simpson nodes
    SplitPair vt = weighted_to_split(basis, phi, s);
    SimpsonRule rule = simpson_rule(T, n_time);
    const int n_nodes = (int)rule.nodes.size();
    out.times = rule.nodes;
    out.control.resize(n_nodes);

    ScalarField u_T(n), ut_T(n);
    Eigen::ArrayXcd cosT = (basis.lambda() * T).cos().cast<std::complex<double>>();
    Eigen::ArrayXcd sinT = (basis.lambda() * T).sin().cast<std::complex<double>>();
    Eigen::ArrayXcd lamc = lam;
    u_T = (data.v0.array() * cosT + data.v1.array() * sinT / lamc).matrix();
    ut_T = (-data.v0.array() * lamc * sinT + data.v1.array() * cosT).matrix();

    for (int j = 0; j < n_nodes; ++j) {
        double t = rule.nodes[j];
        ScalarField adj = propagate_free(basis, vt.vp, t, +1) + propagate_free(basis, vt.vm, t, -1);
        ScalarField f = apply_lambda_s(basis, multiply_function(grid, adj, b_grid), 2.0 * s);
        out.control[j] = f;
        ScalarField g = multiply_function(grid, f, b_grid);
        Eigen::ArrayXcd ker_sin = (basis.lambda() * (T - t)).sin().cast<std::complex<double>>();
        Eigen::ArrayXcd ker_cos = (basis.lambda() * (T - t)).cos().cast<std::complex<double>>();
        u_T += rule.weights[j] * (g.array() * ker_sin / lamc).matrix();
        ut_T += rule.weights[j] * (g.array() * ker_cos).matrix();
    }
    out.final_E0 = energy(basis, {u_T, ut_T}, 0.0);
    return out;
}

// ---- scans ---------------------------------------------------------------------

std::vector<CostScanRow> cost_scan(const ManifoldModel& M, const ObservationFunction& b,
                                   const CollocationGrid& grid, double s, int n_time,
                                   const std::vector<double>& T_list, int beam_k,
                                   unsigned seed, int nx, int na) {
    const SpectralBasis& basis = grid.basis();
    RealGrid b_grid = grid.sample([&](const Vec2& x) { return b.evaluate(M, x); });
    GramianAssembler assembler(grid, b_grid, s);

    // fixed smooth random data (modes <= 8) for the control-cost column
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    CauchyPair data{ScalarField::Zero(basis.n_modes()), ScalarField::Zero(basis.n_modes())};
    int band = std::min(8, basis.K_max());
    for (int idx = 0; idx < basis.n_modes(); ++idx) {
        auto [k1, k2] = basis.mode_of(idx);
        if (std::abs(k1) <= band && std::abs(k2) <= band) {
            data.v0[idx] = std::complex<double>(gauss(rng), gauss(rng));
            data.v1[idx] = std::complex<double>(gauss(rng), gauss(rng));
        }
    }

    std::vector<CostScanRow> rows;
    for (double T : T_list) {
        CostScanRow row;
        row.T = T;
        auto kres = K_of_T(M, b, T, nx, na);
        row.K_of_T = kres.value;
        GramianMatrix G = assembler.assemble(T, n_time);
        EigResult eig = min_eig(G, basis, std::nullopt, false);
        row.lambda_min = eig.value;
        row.C_obs_discrete =
            eig.value > 0.0 ? 1.0 / eig.value : std::numeric_limits<double>::infinity();

        ScalarField beam = gaussian_beam(grid, kres.minimizer, beam_k, s);
        double rk = beam_rayleigh_quotient(grid, b_grid, s, T, n_time, beam);
        double avg = geodesic_average(M, b, kres.minimizer, T);
        double tol_beam = 1.5 * std::abs(rk - avg);
        row.thm_lower_bound_ok = row.lambda_min <= row.K_of_T + tol_beam;

        row.hum_cost = hum_control(grid, b_grid, data, T, s, n_time, 1e-8).cost;
        rows.push_back(row);
    }
    return rows;
}

// ---- Gramian with a potential ---------------------------------------------------

GramianMatrix assemble_gramian_potential(const CollocationGrid& grid, const RealGrid& b_grid,
                                         const RealGrid& c_grid, double T, double s,
                                         double dt_target, int n_time) {
    const SpectralBasis& basis = grid.basis();
    const int n = basis.n_modes();
    const int dim = 2 * n;
    SimpsonRule rule = simpson_rule(T, n_time);
    const int n_nodes = (int)rule.nodes.size();

    Eigen::ArrayXd w_inv = (basis.kappa() + 1.0).pow(-0.5 * s);
    Eigen::ArrayXcd d1(n), d2(n);
    const double twopi = 2.0 * M_PI;
    for (int idx = 0; idx < n; ++idx) {
        auto [k1, k2] = basis.mode_of(idx);
        d1[idx] = kI * (twopi * k1 / basis.period1());
        d2[idx] = kI * (twopi * k2 / basis.period2());
    }

    // v(t_j) per column, stored in mode space
    std::vector<Eigen::MatrixXcd> v_at_node(n_nodes, Eigen::MatrixXcd(n, dim));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int col = 0; col < dim; ++col) {
        SplitPair sp{ScalarField::Zero(n), ScalarField::Zero(n)};
        if (col < n)
            sp.vp[col] = w_inv[col];
        else
            sp.vm[col - n] = w_inv[col - n];
        CauchyPair init = unsplit_sigma(basis, sp);
        WaveTrajectory traj =
            solve_potential(grid, init, c_grid, T, dt_target, n_nodes - 1);
        for (int j = 0; j < n_nodes; ++j)
            v_at_node[j].col(col) = traj.states[j].v0;
    }

    GramianMatrix G;
    G.T = T;
    G.s = s;
    G.K_max = basis.K_max();
    G.n_time = n_time;
    G.entries = Eigen::MatrixXcd::Zero(dim, dim);

    // local-H^1 surrogate observation rows: b v, b d1 v, b d2 v
    Eigen::MatrixXcd rows(3 * n, dim);
    for (int j = 0; j < n_nodes; ++j) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
        for (int col = 0; col < dim; ++col) {
            ScalarField v = v_at_node[j].col(col);
            rows.block(0, col, n, 1) = multiply_function(grid, v, b_grid);
            rows.block(n, col, n, 1) =
                multiply_function(grid, (v.array() * d1).matrix(), b_grid);
            rows.block(2 * n, col, n, 1) =
                multiply_function(grid, (v.array() * d2).matrix(), b_grid);
        }
        G.entries.noalias() += rule.weights[j] * (rows.adjoint() * rows);
    }
    return G;
}

// ---- probes ---------------------------------------------------------------------

EgorovResult egorov_probe(const ManifoldModel& M, const CollocationGrid& grid,
                          const std::function<double(const Vec2&)>& a, double t,
                          const PhasePoint& rho0, int k) {
    const SpectralBasis& basis = grid.basis();
    EgorovResult out;
    ScalarField beam = gaussian_beam(grid, rho0, k, 0.0); // L2-normalized
    RealGrid a_grid = grid.sample(a);
    ScalarField w = propagate_free(basis, beam, t, -1);
    w = multiply_function(grid, w, a_grid);
    w = propagate_free(basis, w, t, +1);
    out.numeric = beam.dot(w); // <e^{itL} M_a e^{-itL} beta, beta>
    out.transported = a(M.geodesic_flow(rho0, t).x);
    out.error = std::abs(out.numeric - out.transported);
    return out;
}

namespace {

// log-substituted quadrature of 1/mu = int_0^inf exp(-u mu) du, valid
// uniformly over mu in [2, 2 lambda_max]
struct ExpKernel {
    std::vector<double> u;
    std::vector<double> w;
};

ExpKernel exp_kernel_rule() {
    ExpKernel k;
    const double x_lo = std::log(1e-9), x_hi = std::log(25.0), h = 0.30;
    for (double x = x_lo; x <= x_hi; x += h) {
        k.u.push_back(std::exp(x));
        k.w.push_back(h * std::exp(x));
    }
    return k;
}

} // namespace

double smoothing_norm_dense(const CollocationGrid& grid, const RealGrid& b_grid,
                            double T, double s) {
    const SpectralBasis& basis = grid.basis();
    const int n = basis.n_modes();
    Eigen::MatrixXcd Mb = multiplication_matrix(grid, b_grid);
    Eigen::ArrayXd pow_s = (basis.kappa() + 1.0).pow(s);
    // B = Lambda^{-2s} M_b Lambda^{2s} M_b as an L2 matrix
    Eigen::MatrixXcd B = Mb;
    B.array().colwise() *= pow_s.cast<std::complex<double>>();
    B = Mb * B;
    B.array().colwise() *= (1.0 / pow_s).cast<std::complex<double>>();

    Eigen::ArrayXd lam = basis.lambda();
    Eigen::ArrayXd half = (basis.kappa() + 1.0).pow(0.5 * s);
    Eigen::MatrixXcd A(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double mu = lam[r] + lam[c];
            std::complex<double> iex = (1.0 - std::exp(-kI * T * mu)) / (kI * mu);
            A(r, c) = half[r] * lam[r] * iex * B(r, c) / half[c];
        }
    // largest singular value by power iteration on A^H A
    Eigen::VectorXcd v = random_unit(n, 5150);
    double sigma2 = 0.0;
    for (int it = 0; it < 60; ++it) {
        Eigen::VectorXcd w = A.adjoint() * (A * v);
        sigma2 = w.norm();
        v = w / sigma2;
    }
    return std::sqrt(sigma2);
}

SmoothingResult smoothing_probe(const ObservationFunction& b, const ManifoldModel& M,
                                double T, double s, int K_max) {
    SpectralBasis basis(K_max, M.period1(), M.period2());
    CollocationGrid grid(basis);
    RealGrid b_grid = grid.sample([&](const Vec2& x) { return b.evaluate(M, x); });

    SmoothingResult out;
    out.K_max = K_max;
    out.diag_norm_b1 = T * basis.lambda_max();

    const int n = basis.n_modes();
    if (n <= 900) {
        out.norm = smoothing_norm_dense(grid, b_grid, T, s);
        return out;
    }

    // separable-kernel route: 1/(lam_k + lam_l) expanded over decaying
    // exponentials so B can be applied by FFT under the quadrature
    ExpKernel ker = exp_kernel_rule();
    Eigen::ArrayXd lam = basis.lambda();
    Eigen::ArrayXd pow_s = (basis.kappa() + 1.0).pow(s);
    Eigen::ArrayXd half = (basis.kappa() + 1.0).pow(0.5 * s);
    Eigen::ArrayXcd phase_T = unit_phase(-T * lam);

    auto apply_B = [&](const ScalarField& v) {
        ScalarField t1 = multiply_function(grid, v, b_grid);
        t1 = (t1.array() * pow_s).matrix();
        ScalarField t2 = multiply_function(grid, t1, b_grid);
        return ScalarField((t2.array() / pow_s).matrix());
    };
    auto apply_BH = [&](const ScalarField& v) {
        ScalarField t1 = multiply_function(grid, (v.array() / pow_s).matrix(), b_grid);
        t1 = (t1.array() * pow_s).matrix();
        return multiply_function(grid, t1, b_grid);
    };
    auto apply_F = [&](const ScalarField& v, bool adjoint) {
        ScalarField acc = ScalarField::Zero(n);
        for (size_t q = 0; q < ker.u.size(); ++q) {
            Eigen::ArrayXd e = (-ker.u[q] * lam).exp();
            ScalarField t = (v.array() * e).matrix();
            t = adjoint ? apply_BH(t) : apply_B(t);
            acc += ker.w[q] * (t.array() * e).matrix();
        }
        return acc;
    };
    // A = D^{s/2} Lambda R1 D^{-s/2}, R1 = -i F + i E_T F E_T
    auto apply_A = [&](const Eigen::VectorXcd& v) {
        ScalarField x = (v.array() / half).matrix();
        ScalarField r = -kI * apply_F(x, false);
        r += kI * (phase_T * apply_F((x.array() * phase_T).matrix(), false).array()).matrix();
        return Eigen::VectorXcd((r.array() * lam * half).matrix());
    };
    auto apply_AH = [&](const Eigen::VectorXcd& v) {
        ScalarField x = (v.array() * lam * half).matrix();
        ScalarField r = kI * apply_F(x, true);
        r += -kI * (phase_T.conjugate() *
                    apply_F((x.array() * phase_T.conjugate()).matrix(), true).array())
                       .matrix();
        return Eigen::VectorXcd((r.array() / half).matrix());
    };

    Eigen::VectorXcd v = random_unit(n, 5151);
    double sigma2 = 0.0;
    for (int it = 0; it < 30; ++it) {
        Eigen::VectorXcd w = apply_AH(apply_A(v));
        sigma2 = w.norm();
        v = w / sigma2;
    }
    out.norm = std::sqrt(sigma2);
    return out;
}

} // namespace wavegcc
