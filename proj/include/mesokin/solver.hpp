#ifndef MESOKIN_SOLVER_HPP
#define MESOKIN_SOLVER_HPP

#include <functional>
#include <stdexcept>

#include "mesokin/fields.hpp"

namespace mesokin {

/// Raised when a run produces NaNs or negative components.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Raised when parameters violate a scheme precondition.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Splitting { Lie, Strang };

struct SimParams {
    double mu = 1.0;       // turning rate, > 0
    double kappa = 5.0;    // fibre remodelling rate, >= 0
    double dt = 0.1;       // time step, > 0
    double epsilon = 1.0;  // parabolic scaling parameter, > 0
    SpeedMeasure speeds = SpeedMeasure::dirac(1.0);
    Splitting splitting = Splitting::Lie;

    void validate(const Grid& grid) const;
};

struct SimState {
    CellField p;
    FibreField q;
    double time = 0.0;
};

/// Collisionless transport: each (k,j) slice is translated by
/// (speed_k/epsilon) * dt along its bin-center direction, using periodic
/// bilinear interpolation.  Unconditionally stable; preserves the global sum
/// to round-off.  Shifts beyond half the domain are a configuration error.
CellField advect_step(const CellField& p, double dt, const SpeedMeasure& speeds, double epsilon);

/// Exact relaxation of the pure turning dynamics over one step:
/// p <- a p + (1-a) pbar q~  with a = exp(-(mu/eps^2) dt).
/// Preserves per-cell mass exactly and commutes with scaling of p.
CellField turning_step(const CellField& p, const FibreField& q, double dt, double mu,
                       double epsilon);

/// Normalized-exponential (replicator) update of the fibre bins with the
/// per-cell fitness Lambda_j frozen over the step:
/// q_j <- q_j exp(kappa dt Lambda_j) / sum_l q_l exp(kappa dt Lambda_l).
/// Exact for constant fitness; preserves positivity and normalization.
FibreField fibre_step(const FibreField& q, const CellField& p, double dt, double kappa);

/// One full splitting step (Lie: advect, turn, fibre;
/// Strang: half-advect, turn, fibre, half-advect).
void step(SimState& state, const SimParams& params);

struct RunCallbacks {
    int snapshot_every = 0;  // in steps; 0 = first and last only
    std::function<void(const SimState&, int step_index)> on_snapshot;
};

/// Advance to time T (exact landing; the last step may be shorter).
/// Aborts with NumericalError on NaN or negative components.
void run(SimState& state, const SimParams& params, double t_end,
         const RunCallbacks& callbacks = {});

}  // namespace mesokin

#endif
