#ifndef MESOKIN_MEASURE_HPP
#define MESOKIN_MEASURE_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace mesokin {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Tolerance below which two atom angles are considered identical and merged.
constexpr double kAtomMergeTol = 1e-12;
/// Normalization tolerance for probability measures (fibre and speed).
constexpr double kNormTol = 1e-12;

/// Map an angle to [0, 2*pi).
double wrap_angle(double a);

struct Atom {
    double angle;   // radians in [0, 2*pi)
    double weight;  // nonnegative
};

/// A finite nonnegative measure on the unit circle.
///
/// Dual representation: a list of point masses (atoms, kept at exact angles)
/// plus a binned density (n_bins uniform angular bins, each entry the total
/// mass of its bin).  Integrals of a continuous function f against the binned
/// part use the midpoint rule, f evaluated at bin centers; integrals against
/// atoms are exact.  Instances are immutable after construction.
class DirectionMeasure {
public:
    DirectionMeasure() = default;

    static DirectionMeasure uniform(int n_bins);
    static DirectionMeasure from_bins(Eigen::VectorXd bins);
    static DirectionMeasure from_atoms(std::vector<Atom> atoms);
    static DirectionMeasure from_parts(std::vector<Atom> atoms, Eigen::VectorXd bins);
    /// (delta_gamma + delta_{-gamma}) / 2 for gamma at the given angle.
    static DirectionMeasure aligned(double angle);

    const std::vector<Atom>& atoms() const { return atoms_; }
    const Eigen::VectorXd& bins() const { return bins_; }
    int n_bins() const { return static_cast<int>(bins_.size()); }

    double total_mass() const;

    /// Weight of the atom at `angle` (0 if none within `tol`).
    double atom_weight_at(double angle, double tol = 1e-9) const;

    /// Mass of bin j plus any atoms falling inside it.  Used when a measure
    /// must be collapsed onto a discrete direction set of `n` bins.
    double mass_with_atoms_in_bin(int j, int n) const;

    /// Invariance under the antipodal map theta -> -theta, up to `tol`
    /// per component (undirected tissue).
    bool is_symmetric(double tol = kNormTol) const;

    bool is_normalized(double tol = kNormTol) const;

    DirectionMeasure scaled(double c) const;
    /// Image under the antipodal map (even bin counts only for binned parts).
    DirectionMeasure flipped() const;

    /// Node angle of bin j on an n-bin grid: j * 2*pi / n (bin j covers the
    /// arc within half a bin width of its node).
    static double bin_center(int j, int n);
    /// Index of the bin containing `angle` on an n-bin grid.
    static int bin_index(double angle, int n);

private:
    std::vector<Atom> atoms_;  // sorted by angle, merged, weights >= 0
    Eigen::VectorXd bins_;     // size 0 if purely atomic
};

struct SpeedNode {
    double speed;   // > 0
    double weight;  // >= 0
};

/// A probability measure on the speed interval, as a finite set of nodes.
class SpeedMeasure {
public:
    static SpeedMeasure dirac(double speed);
    static SpeedMeasure from_nodes(std::vector<SpeedNode> nodes);

    const std::vector<SpeedNode>& nodes() const { return nodes_; }
    int size() const { return static_cast<int>(nodes_.size()); }
    double max_speed() const;
    /// Second moment of the speed: integral of s^2 dm(s).
    double second_moment() const;

    SpeedMeasure scaled_speeds(double factor) const;

private:
    std::vector<SpeedNode> nodes_;
};

/// A nonnegative measure on the velocity annulus V = [s1,s2] x S^1,
/// stored in tensor-product layout: one DirectionMeasure per speed node.
class VelocityMeasure {
public:
    VelocityMeasure() = default;
    VelocityMeasure(std::vector<double> speeds, std::vector<DirectionMeasure> parts);

    int n_speed_nodes() const { return static_cast<int>(speeds_.size()); }
    double speed(int k) const { return speeds_[k]; }
    const DirectionMeasure& part(int k) const { return parts_[k]; }

    double mass() const;
    Vec2 first_moment() const;
    Mat2 second_moment() const;

    VelocityMeasure scaled(double c) const;

private:
    std::vector<double> speeds_;
    std::vector<DirectionMeasure> parts_;
};

/// Formal difference of two velocity measures.  Signed values appear only as
/// transient arithmetic results (turning residuals); this is not a
/// Hahn-Jordan decomposition, gain and loss may overlap.
struct VelocityMeasureDelta {
    VelocityMeasure gain;
    VelocityMeasure loss;

    double mass() const { return gain.mass() - loss.mass(); }
};

// --- measure operations ---

/// Total variation norm; equals total mass for nonnegative measures.
double total_variation(const DirectionMeasure& mu);
double total_variation(const VelocityMeasure& mu);

/// Spatial mass of a velocity distribution, mass over all of V.
double mass_bar(const VelocityMeasure& p);

/// Lift a direction measure to a velocity measure through the speed measure:
/// one copy of q per speed node, scaled by the node weight.  Mass-preserving.
VelocityMeasure lift(const DirectionMeasure& q, const SpeedMeasure& m);

/// Mean absolute projection of p onto the direction theta:
/// integral over V of |theta . v/|v||  dp(v).  Depends only on the
/// directions in p, not the speed magnitudes.  Zero measure gives 0.
double lambda_at(const VelocityMeasure& p, double theta);
Eigen::VectorXd lambda_at(const VelocityMeasure& p, const Eigen::VectorXd& thetas);

/// Direction sampling for lambda: the bin centers of q's grid plus the
/// angles of q's atoms.
Eigen::VectorXd sampling_angles(const DirectionMeasure& q);

/// Relative alignment: lambda averaged against q,
/// exact over q's atoms plus midpoint quadrature over q's bins.
double alignment_B(const VelocityMeasure& p, const DirectionMeasure& q);

/// Turning residual q~*pbar - p.  Its mass vanishes up to round-off.
VelocityMeasureDelta turning_apply(const DirectionMeasure& q, const SpeedMeasure& m,
                                   const VelocityMeasure& p);

}  // namespace mesokin

#endif
