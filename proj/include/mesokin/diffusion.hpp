#ifndef MESOKIN_DIFFUSION_HPP
#define MESOKIN_DIFFUSION_HPP

#include <Eigen/Dense>

#include <vector>

#include "mesokin/fields.hpp"
#include "mesokin/solver.hpp"

namespace mesokin {

/// Macroscopic diffusion tensor of the parabolic limit,
/// D[q] = (1/mu) * second moment of q~ = sigma * V(q) with
/// sigma = (1/mu) integral of s^2 dm(s) and V(q) the direction covariance.
/// The two routes are computed independently and must agree to 1e-12.
Mat2 diffusion_tensor(const DirectionMeasure& q, const SpeedMeasure& m, double mu);

/// Direction covariance V(q) = integral of theta (x) theta dq(theta).
Mat2 direction_covariance(const DirectionMeasure& q);

struct DensityField {
    Grid grid;
    Eigen::ArrayXXd rho;

    double total_mass() const { return rho.sum() * grid.dx * grid.dy; }
};

/// Largest admissible explicit time step, min(dx,dy)^2 / (4 lambda_max(D)).
double diffusion_stable_dt(const Grid& grid, const Mat2& d);

/// Conservative explicit finite-difference solution of
/// d rho / dt = div(D grad rho) on the periodic grid, flux form with
/// corner-centered differences for the anisotropic cross terms.
/// Enforces the explicit stability bound on dt; lands on t_end exactly.
DensityField diffusion_solve(const DensityField& rho0, const Mat2& d, double dt, double t_end);

/// Per-cell tensor variant; `dxx`, `dxy`, `dyy` give the tensor components.
struct TensorField {
    Eigen::ArrayXXd dxx, dxy, dyy;
};
DensityField diffusion_solve(const DensityField& rho0, const TensorField& d, double dt,
                             double t_end);

struct ConvergenceRow {
    double epsilon;
    double l1_error;    // L1 distance between pbar_eps(.,T) and rho(.,T)
    double weak_error;  // largest pairing of p_eps - rho q~ with the test set
    int kinetic_steps;
};

/// Scaling-limit experiment: for each epsilon, the scaled kinetic system
/// (kappa = 0, frozen fibre field) is run to time T and its mass density
/// compared against the diffusion solution with tensor D[q] from the same
/// initial mass.  q must be symmetric under theta -> -theta.
/// The kinetic step is dt = dt_coeff * eps^2 (adjusted to land on T).
std::vector<ConvergenceRow> convergence_experiment(const CellField& p0,
                                                   const DirectionMeasure& q, double mu,
                                                   const std::vector<double>& eps_list, double t_end,
                                                   double dt_coeff = 2.0);

}  // namespace mesokin

#endif
