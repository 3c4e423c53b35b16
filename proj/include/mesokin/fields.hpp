#ifndef MESOKIN_FIELDS_HPP
#define MESOKIN_FIELDS_HPP

#include <Eigen/Dense>

#include <vector>

#include "mesokin/grid.hpp"
#include "mesokin/measure.hpp"

namespace mesokin {

/// Cell velocity distribution on a periodic grid: one nonnegative spatial
/// slice per discrete velocity node (speed node k, direction bin j).  The
/// discrete velocity set is bin centers x speed nodes.  Slices are indexed
/// slice(k, j) = arrays of shape (ny, nx).
class CellField {
public:
    CellField() = default;
    CellField(const Grid& grid, const SpeedMeasure& speeds, int n_theta);

    const Grid& grid() const { return grid_; }
    const SpeedMeasure& speeds() const { return speeds_; }
    int n_theta() const { return n_theta_; }
    int n_slices() const { return static_cast<int>(slices_.size()); }

    Eigen::ArrayXXd& slice(int k, int j) { return slices_[k * n_theta_ + j]; }
    const Eigen::ArrayXXd& slice(int k, int j) const { return slices_[k * n_theta_ + j]; }
    Eigen::ArrayXXd& slice(int kj) { return slices_[kj]; }
    const Eigen::ArrayXXd& slice(int kj) const { return slices_[kj]; }

    /// Velocity of slice (k, j).
    Vec2 node_velocity(int k, int j) const;

    /// Per-cell mass density over all velocity nodes.
    Eigen::ArrayXXd mass_density() const;
    /// Per-cell marginal over speeds for one direction bin.
    Eigen::ArrayXXd direction_marginal(int j) const;

    /// Total cell mass, integral of the mass density over the torus.
    double total_mass() const;

    double min_value() const;
    bool all_finite() const;

    /// The velocity measure held at one grid cell.
    VelocityMeasure measure_at(int ix, int iy) const;

private:
    Grid grid_;
    SpeedMeasure speeds_ = SpeedMeasure::dirac(1.0);
    int n_theta_ = 0;
    std::vector<Eigen::ArrayXXd> slices_;
};

/// Binned fibre orientation distribution on a periodic grid, one slice per
/// direction bin, normalized to total mass 1 in every cell.
class FibreField {
public:
    FibreField() = default;
    FibreField(const Grid& grid, int n_theta);

    /// Constant-in-space field from a direction measure.  Atoms are deposited
    /// into their containing bin; `atom_warning` is set when that happens.
    static FibreField constant(const Grid& grid, int n_theta, const DirectionMeasure& q,
                               bool* atom_warning = nullptr);
    static FibreField uniform(const Grid& grid, int n_theta);

    const Grid& grid() const { return grid_; }
    int n_theta() const { return n_theta_; }

    Eigen::ArrayXXd& bin(int j) { return bins_[j]; }
    const Eigen::ArrayXXd& bin(int j) const { return bins_[j]; }

    /// Per-cell total mass (should be 1 everywhere).
    Eigen::ArrayXXd cell_mass() const;
    void normalize();

    double min_value() const;
    bool all_finite() const;

    DirectionMeasure measure_at(int ix, int iy) const;

private:
    Grid grid_;
    int n_theta_ = 0;
    std::vector<Eigen::ArrayXXd> bins_;
};

}  // namespace mesokin

#endif
