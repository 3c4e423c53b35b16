#ifndef MESOKIN_CHARACTERISTICS_HPP
#define MESOKIN_CHARACTERISTICS_HPP

#include <functional>

#include "mesokin/fields.hpp"
#include "mesokin/solver.hpp"

namespace mesokin {

/// Raised when the resolvent denominator 1 - K(x,t) falls inside the guard.
struct SingularKernelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Guard width around K = 1; K < 1 holds analytically, so tripping it
/// signals a quadrature problem rather than admissible input.
constexpr double kKernelGuard = 1e-10;

/// A fibre distribution prescribed as a function of space and time.
/// Returned measures must be normalized; atom angles (if any) must not move
/// between evaluation points, only their weights and the bin masses may vary.
struct PrescribedFibreField {
    std::function<DirectionMeasure(const Vec2& x, double t)> eval;
    bool constant_in_time = false;
    bool constant_in_space = false;

    static PrescribedFibreField constant(const DirectionMeasure& q);
    bool constant_q() const { return constant_in_time && constant_in_space; }
};

/// Initial velocity distribution evaluated per discrete node at arbitrary
/// points (analytic, or a grid field through periodic bilinear interpolation).
struct VelocityDatum {
    int n_theta = 0;
    SpeedMeasure speeds = SpeedMeasure::dirac(1.0);
    std::function<double(const Vec2& x, int k, int j)> node_density;

    Vec2 node_velocity(int k, int j) const;

    /// Shifted total mass: sum over nodes of node_density(x - t v, k, j).
    double shifted_mass(const Vec2& x, double t) const;

    static VelocityDatum from_cell_field(const CellField& p0);
    /// rho0(x) spread uniformly over all direction bins.
    static VelocityDatum isotropic(int n_theta, const SpeedMeasure& m,
                                   std::function<double(const Vec2&)> rho0);
    /// rho0(x) concentrated in direction bin j0.
    static VelocityDatum single_bin(int n_theta, const SpeedMeasure& m, int j0,
                                    std::function<double(const Vec2&)> rho0);
};

/// Exponentially damped history average of the fibre mass along backward
/// characteristics.  Time integration uses a product-trapezoid rule: the
/// measure factor is piecewise linear in s, the exponential weight is
/// integrated exactly (so constant q gives K = 1 - exp(-mu t) to round-off).
/// quad_steps is the number of time intervals, >= 2.
double kernel_K(const Vec2& x, double t, const PrescribedFibreField& q, double mu,
                const SpeedMeasure& m, int quad_steps);

/// Mass density in the constant-q regime: initial mass integrated over the
/// backward domain of dependence, pbar(x,t) = p0(x - Vt, V).
double huygens_pbar(const Vec2& x, double t, const VelocityDatum& p0,
                    const PrescribedFibreField& q);

/// General-q mass density pbar = exp(-mu t) p0(x - Vt, V) / (1 - K(x,t)).
double pbar_general(const Vec2& x, double t, const VelocityDatum& p0,
                    const PrescribedFibreField& q, double mu, int quad_steps);

/// Full measure solution for prescribed q, assembled per discrete velocity
/// node (bins plus the fibre field's atom directions).
VelocityMeasure explicit_solution(const Vec2& x, double t, const VelocityDatum& p0,
                                  const PrescribedFibreField& q, double mu, int quad_steps);

/// Constant-q specialization: convex combination of the transported initial
/// condition and the fully aligned redistribution,
/// p = exp(-mu t) p0(x - tv) + (1 - exp(-mu t)) pbar(x,t) q~.
VelocityMeasure constant_q_solution(const Vec2& x, double t, const VelocityDatum& p0,
                                    const DirectionMeasure& q, double mu);

}  // namespace mesokin

#endif
