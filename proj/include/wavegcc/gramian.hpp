#ifndef WAVEGCC_GRAMIAN_HPP
#define WAVEGCC_GRAMIAN_HPP

#include "wavegcc/control_times.hpp"
#include "wavegcc/numerics.hpp"
#include "wavegcc/spectral.hpp"

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace wavegcc {

// The Gramian acts on weighted split coordinates
//   phi(+-, k) = (kappa_k + 1)^{s/2} v+-_k,
// in which the H^s x H^s inner product is the plain dot product and
// E_s(V0) = |phi|^2. Entries are Hermitian PSD by construction.
struct GramianMatrix {
    Eigen::MatrixXcd entries;
    double T = 0.0;
    double s = 1.0;
    int K_max = 0;
    int n_time = 0;
    std::string b_description;
};

// Weighted-coordinate helpers.
Eigen::VectorXcd split_to_weighted(const SpectralBasis& basis, const SplitPair& v, double s);
SplitPair weighted_to_split(const SpectralBasis& basis, const Eigen::VectorXcd& phi, double s);

// Dense assembly; the b-dependent middle factor is cached so that scans over T
// reuse it.
class GramianAssembler {
public:
    GramianAssembler(const CollocationGrid& grid, const RealGrid& b_grid, double s);

    GramianMatrix assemble(double T, int n_time) const;

    // quadratic form of the whole observation integral for one state, computed
    // independently of the matrix (direct propagate / multiply / norm at the
    // same Simpson nodes); used as the dual-route consistency oracle
    double direct_quadratic_form(const SplitPair& v, double T, int n_time) const;

    const CollocationGrid& grid() const { return grid_; }
    double s() const { return s_; }

private:
    const CollocationGrid& grid_;
    RealGrid b_;
    double s_;
    Eigen::MatrixXcd btilde_; // D^{-s/2} M_b^H D^s M_b D^{-s/2}
};

// Matrix-free Gramian application for large cutoffs: one propagate / multiply /
// back-propagate sweep per Simpson node.
class GramianOperator {
public:
    GramianOperator(const CollocationGrid& grid, const RealGrid& b_grid, double s,
                    double T, int n_time);

    int dim() const { return 2 * grid_.basis().n_modes(); }
    Eigen::VectorXcd apply(const Eigen::VectorXcd& phi) const;
    Eigen::VectorXd diagonal() const;

    // Restrict to the shell F_kappa (modes with kappa_k > kappa).
    void set_shell(std::optional<double> kappa);
    const Eigen::VectorXd& mask() const { return mask_; }

    double T() const { return T_; }

private:
    const CollocationGrid& grid_;
    RealGrid b_;
    double s_;
    double T_;
    SimpsonRule rule_;
    Eigen::ArrayXd w_half_;     // (kappa+1)^{s/2}
    Eigen::ArrayXd w_half_inv_; // (kappa+1)^{-s/2}
    Eigen::ArrayXd pow_s_;      // (kappa+1)^{s}
    Eigen::VectorXd mask_;
};

struct EigResult {
    double value = 0.0;
    Eigen::VectorXcd vector;
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
};

// Smallest eigenpair of a Hermitian PSD matrix or operator. Dense storage uses
// a full solver for small dimensions and Lanczos on the stored matrix above
// that; matrix-free always uses Lanczos on the reversed spectrum with full
// reorthogonalization. `shell` restricts to F_kappa first.
EigResult min_eig(const GramianMatrix& G, const SpectralBasis& basis,
                  std::optional<double> shell = std::nullopt, bool throw_on_fail = true);
EigResult min_eig_operator(const GramianOperator& op, double tol = 1e-8, int max_iter = 400,
                           bool throw_on_fail = true);

double max_eig_estimate(const std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>& apply,
                        int dim, int iters = 25, unsigned seed = 12345);

// Simpson intervals needed so the fastest integrand oscillation exp(2 i t
// lambda_max) of the split cross blocks stays resolved (about 4-5 nodes per
// period); below this the cross blocks alias and pollute the bottom of the
// spectrum.
int resolved_n_time(const SpectralBasis& basis, double T, int minimum = 64);

// ---- observability reports --------------------------------------------------

struct ObservabilityReport {
    double T = 0.0;
    double s = 1.0;
    int K_max = 0;
    int beam_k = 0;
    double K_of_T = 0.0;          // geodesic minimum from control_times
    PhasePoint minimizer;
    double lambda_min = 0.0;      // smallest Gramian eigenvalue = 1/C_obs
    double C_obs_discrete = 0.0;
    double beam_rayleigh = 0.0;   // beam quadratic form at the minimizer
    double geodesic_avg = 0.0;    // geodesic average at the minimizer
    double tol_beam = 0.0;        // 1.5 x measured beam concentration error
    bool lower_bound_ok = false;  // lambda_min <= K(T) + tol_beam
    bool eig_converged = false;
};

ObservabilityReport observability_report(const ManifoldModel& M, const ObservationFunction& b,
                                         const CollocationGrid& grid, double T, double s,
                                         int n_time, int beam_k, int nx = 24, int na = 16);

struct ShellLevel {
    double kappa = 0.0;
    double lambda_min = 0.0;
    double ratio_to_K = 0.0;
};

struct ShellObservabilityResult {
    double K_of_T = 0.0;
    std::vector<ShellLevel> levels;
    double empirical_C0 = 0.0; // fitted deficit constant over random shell states
    int stabilized_index = -1;
    bool ratio_nondecreasing = false;
};

ShellObservabilityResult shell_observability(const ManifoldModel& M, const ObservationFunction& b,
                                             const CollocationGrid& grid, double T, double s,
                                             int n_time, const std::vector<double>& kappas,
                                             int nx = 24, int na = 16, unsigned seed = 7);

// ---- HUM control synthesis --------------------------------------------------

struct HumResult {
    double initial_E0 = 0.0;
    double final_E0 = 0.0;
    double cost = 0.0; // sum_j w_j |f(t_j)|_{H^-s}^2 = <G phi, phi>
    int cg_iterations = 0;
    std::vector<double> times;           // Simpson nodes
    std::vector<ScalarField> control;    // f(t_j), Fourier coefficients
};

// Solves G phi = d by Jacobi-preconditioned CG, reconstructs the control
// f(t) = Lambda^{2s} b_omega vtilde(t) and simulates the controlled equation
// (L = -Laplace + 1) with the source applied at the same quadrature nodes.
HumResult hum_control(const CollocationGrid& grid, const RealGrid& b_grid,
                      const CauchyPair& data, double T, double s, int n_time, double cg_tol);

// ---- scans and probes --------------------------------------------------------

struct CostScanRow {
    double T = 0.0;
    double K_of_T = 0.0;
    double lambda_min = 0.0;
    double C_obs_discrete = 0.0;
    double hum_cost = 0.0;
    bool thm_lower_bound_ok = false;
};

std::vector<CostScanRow> cost_scan(const ManifoldModel& M, const ObservationFunction& b,
                                   const CollocationGrid& grid, double s, int n_time,
                                   const std::vector<double>& T_list, int beam_k,
                                   unsigned seed = 11, int nx = 24, int na = 16);

// Gramian with a potential: solve_potential as propagator, local-H^1 surrogate
// observation |b grad v|^2 + |b v|^2.
GramianMatrix assemble_gramian_potential(const CollocationGrid& grid, const RealGrid& b_grid,
                                         const RealGrid& c_grid, double T, double s,
                                         double dt_target, int n_time);

// Scalar Egorov probe: <e^{itL} M_a e^{-itL} beta, beta>_{L2} against the
// transported symbol a(pi phi_t(rho0)).
struct EgorovResult {
    std::complex<double> numeric;
    double transported = 0.0;
    double error = 0.0;
};
EgorovResult egorov_probe(const ManifoldModel& M, const CollocationGrid& grid,
                          const std::function<double(const Vec2&)>& a, double t,
                          const PhasePoint& rho0, int k);

// Off-diagonal smoothing probe: operator norm of Lambda o R^1_T on H^sigma,
// R^1_T = int_0^T e^{-itLambda} B e^{-itLambda} dt with exact time integral.
struct SmoothingResult {
    int K_max = 0;
    double norm = 0.0;           // |Lambda R^1_T|_{H^sigma -> H^sigma}
    double diag_norm_b1 = 0.0;   // closed-form diagonal-block norm for b == 1 (negative control)
};
SmoothingResult smoothing_probe(const ObservationFunction& b, const ManifoldModel& M,
                                double T, double s, int K_max);

// dense variant used to validate the separable-kernel route (small K only)
double smoothing_norm_dense(const CollocationGrid& grid, const RealGrid& b_grid,
                            double T, double s);

} // namespace wavegcc

#endif
