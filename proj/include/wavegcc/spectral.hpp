#ifndef WAVEGCC_SPECTRAL_HPP
#define WAVEGCC_SPECTRAL_HPP

#include "wavegcc/manifold.hpp"
#include "wavegcc/region.hpp"

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

namespace wavegcc {

using ScalarField = Eigen::VectorXcd; // coefficients on the L2-normalized Fourier basis
using GridField = Eigen::VectorXcd;   // values at collocation points, row-major
using RealGrid = Eigen::VectorXd;

struct CauchyPair {
    ScalarField v0;
    ScalarField v1;
};

struct SplitPair {
    ScalarField vp;
    ScalarField vm;
};

struct WaveTrajectory {
    std::vector<double> times;
    std::vector<CauchyPair> states;
    double dt = 0.0; // internal step actually used
};

// Truncated Fourier basis on the flat torus: modes |k|_inf <= K_max,
// kappa_k = (2 pi)^2 (k1^2/L1^2 + k2^2/L2^2), lambda_k = sqrt(kappa_k + 1).
class SpectralBasis {
public:
    SpectralBasis(int K_max, double L1 = 1.0, double L2 = 1.0);

    int K_max() const { return K_; }
    int n_modes() const { return n_; }
    double period1() const { return L1_; }
    double period2() const { return L2_; }

    int index_of(int k1, int k2) const { return (k1 + K_) * (2 * K_ + 1) + (k2 + K_); }
    std::pair<int, int> mode_of(int idx) const {
        return {idx / (2 * K_ + 1) - K_, idx % (2 * K_ + 1) - K_};
    }

    const Eigen::ArrayXd& kappa() const { return kappa_; }
    const Eigen::ArrayXd& lambda() const { return lambda_; }
    double lambda_max() const { return lambda_.maxCoeff(); }

private:
    int K_;
    int n_;
    double L1_, L2_;
    Eigen::ArrayXd kappa_;
    Eigen::ArrayXd lambda_;
};

// Dealiased collocation grid with FFTW transforms. The default size is the
// smallest 2^a 3^b 5^c composite >= 4 K_max + 2, enough for exact quadratic
// products of truncated fields.
class CollocationGrid {
public:
    CollocationGrid(const SpectralBasis& basis, int N = 0);
    ~CollocationGrid();
    CollocationGrid(const CollocationGrid&) = delete;
    CollocationGrid& operator=(const CollocationGrid&) = delete;

    int size() const { return N_; }
    int n_points() const { return N_ * N_; }
    const SpectralBasis& basis() const { return basis_; }

    Vec2 point(int i, int j) const {
        return Vec2(i * basis_.period1() / N_, j * basis_.period2() / N_);
    }

    GridField to_grid(const ScalarField& coeffs) const;
    ScalarField from_grid(const GridField& values) const;

    // All N^2 Fourier coefficients of a grid function, in grid layout with
    // wrapped mode indices; same normalization as from_grid.
    Eigen::VectorXcd full_spectrum(const GridField& values) const;
    std::complex<double> spectrum_at(const Eigen::VectorXcd& spectrum, int k1, int k2) const {
        int i1 = (k1 % N_ + N_) % N_;
        int i2 = (k2 % N_ + N_) % N_;
        return spectrum[(size_t)i1 * N_ + i2];
    }

    // Samples a chart function at the collocation points.
    RealGrid sample(const std::function<double(const Vec2&)>& f) const;

    // L2 quadrature weight of one grid cell.
    double cell_weight() const { return basis_.period1() * basis_.period2() / n_points(); }

private:
    const SpectralBasis& basis_;
    int N_;
    void* plan_fwd_; // fftw_plan
    void* plan_bwd_;
};

int friendly_grid_size(int minimum);

// ---- coefficientwise operators -------------------------------------------

// Lambda^s f: multiply mode k by (kappa_k + 1)^{s/2}.
ScalarField apply_lambda_s(const SpectralBasis& basis, const ScalarField& v, double s);

double hs_norm(const SpectralBasis& basis, const ScalarField& v, double s);

// Wave splitting v+- = (v0 -+ i Lambda^{-1} v1)/2 and its exact inverse.
SplitPair split_sigma(const SpectralBasis& basis, const CauchyPair& v);
CauchyPair unsplit_sigma(const SpectralBasis& basis, const SplitPair& v);

// exp(+- i t Lambda) applied modewise (exact free half-wave propagation).
ScalarField propagate_free(const SpectralBasis& basis, const ScalarField& v, double t, int sign);

// Free Klein-Gordon solution at time t from Cauchy data.
CauchyPair propagate_free_pair(const SpectralBasis& basis, const CauchyPair& v, double t);

// Truncated multiplication by a real grid function: inverse transform,
// pointwise multiply, forward transform, truncate.
ScalarField multiply_function(const CollocationGrid& grid, const ScalarField& v, const RealGrid& f);

// Energies: E_s = (|v0|_{H^s}^2 + |v1|_{H^{s-1}}^2)/2 and
// E_c = (|v1|_{L2}^2 + |grad v0|_{L2}^2 + int c |v0|^2)/2.
double energy(const SpectralBasis& basis, const CauchyPair& v, double s);
double energy_c(const CollocationGrid& grid, const CauchyPair& v, const RealGrid& c);

// ---- frequency shells ------------------------------------------------------

// Projection onto F_kappa: zeroes all modes with kappa_k <= kappa (both components).
CauchyPair shell_project(const SpectralBasis& basis, const CauchyPair& v, double kappa);
bool shell_member(const SpectralBasis& basis, const CauchyPair& v, double kappa);

// ---- Gaussian beam ---------------------------------------------------------

// H^s-normalized wave packet concentrating at rho0 in S*M; k is the
// concentration parameter (dominant mode magnitude). Requires 4 <= k <= K_max/2.
ScalarField gaussian_beam(const CollocationGrid& grid, const PhasePoint& rho0, int k, double s);

// Fraction of H^s mass carried by modes within `angle` of the beam direction
// and magnitude in [k/2, 2k].
double beam_concentration(const SpectralBasis& basis, const ScalarField& beam,
                          const Vec2& eta0, int k, double s, double angle);

// ---- time steppers ---------------------------------------------------------

// d_t^2 v - Laplace v + c v = 0 via Stoermer-Verlet leapfrog; -Laplace applied
// spectrally, c on the grid. dt_target is reduced so that store_count uniform
// samples land exactly on steps. Requires dt <= 0.5/lambda_max.
WaveTrajectory solve_potential(const CollocationGrid& grid, const CauchyPair& init,
                               const RealGrid& c, double T, double dt_target, int store_count);

// d_t^2 v - Laplace v + b0 d_t v = 0; same leapfrog with the damping applied
// on the grid by an implicit midpoint update inside each kick.
WaveTrajectory solve_damped(const CollocationGrid& grid, const CauchyPair& init,
                            const RealGrid& b0, double T, double dt_target, int store_count);

} // namespace wavegcc

#endif
