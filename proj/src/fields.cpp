#include "mesokin/fields.hpp"

#include <cmath>

namespace mesokin {

CellField::CellField(const Grid& grid, const SpeedMeasure& speeds, int n_theta)
    : grid_(grid), speeds_(speeds), n_theta_(n_theta) {
    if (n_theta < 1) throw std::invalid_argument("CellField: n_theta must be positive");
    slices_.assign(static_cast<std::size_t>(speeds.size()) * n_theta,
                   Eigen::ArrayXXd::Zero(grid.ny, grid.nx));
}

Vec2 CellField::node_velocity(int k, int j) const {
    double theta = DirectionMeasure::bin_center(j, n_theta_);
    return speeds_.nodes()[k].speed * Vec2(std::cos(theta), std::sin(theta));
}

Eigen::ArrayXXd CellField::mass_density() const {
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(grid_.ny, grid_.nx);
    for (const Eigen::ArrayXXd& s : slices_) acc += s;
    return acc;
}

Eigen::ArrayXXd CellField::direction_marginal(int j) const {
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(grid_.ny, grid_.nx);
    for (int k = 0; k < speeds_.size(); ++k) acc += slice(k, j);
    return acc;
}

double CellField::total_mass() const {
    double acc = 0.0;
    for (const Eigen::ArrayXXd& s : slices_) acc += s.sum();
    return acc * grid_.dx * grid_.dy;
}

double CellField::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (const Eigen::ArrayXXd& s : slices_) m = std::min(m, s.minCoeff());
    return m;
}

bool CellField::all_finite() const {
    for (const Eigen::ArrayXXd& s : slices_)
        if (!s.allFinite()) return false;
    return true;
}

VelocityMeasure CellField::measure_at(int ix, int iy) const {
    std::vector<double> speeds;
    std::vector<DirectionMeasure> parts;
    for (int k = 0; k < speeds_.size(); ++k) {
        speeds.push_back(speeds_.nodes()[k].speed);
        Eigen::VectorXd bins(n_theta_);
        for (int j = 0; j < n_theta_; ++j) bins(j) = slice(k, j)(iy, ix);
        parts.push_back(DirectionMeasure::from_bins(std::move(bins)));
    }
    return VelocityMeasure(std::move(speeds), std::move(parts));
}

FibreField::FibreField(const Grid& grid, int n_theta) : grid_(grid), n_theta_(n_theta) {
    if (n_theta < 1) throw std::invalid_argument("FibreField: n_theta must be positive");
    bins_.assign(n_theta, Eigen::ArrayXXd::Zero(grid.ny, grid.nx));
}

FibreField FibreField::constant(const Grid& grid, int n_theta, const DirectionMeasure& q,
                                bool* atom_warning) {
    if (!q.is_normalized())
        throw std::invalid_argument("FibreField::constant: measure not normalized");
    if (q.n_bins() != 0 && q.n_bins() != n_theta)
        throw std::invalid_argument("FibreField::constant: bin count mismatch");
    if (atom_warning) *atom_warning = !q.atoms().empty();
    FibreField f(grid, n_theta);
    for (int j = 0; j < n_theta; ++j) {
        double mass = q.mass_with_atoms_in_bin(j, n_theta);
        f.bins_[j].setConstant(mass);
    }
    return f;
}

FibreField FibreField::uniform(const Grid& grid, int n_theta) {
    return constant(grid, n_theta, DirectionMeasure::uniform(n_theta));
}

Eigen::ArrayXXd FibreField::cell_mass() const {
    Eigen::ArrayXXd acc = Eigen::ArrayXXd::Zero(grid_.ny, grid_.nx);
    for (const Eigen::ArrayXXd& b : bins_) acc += b;
    return acc;
}

void FibreField::normalize() {
    Eigen::ArrayXXd mass = cell_mass();
    for (Eigen::ArrayXXd& b : bins_) b /= mass;
}

double FibreField::min_value() const {
    double m = std::numeric_limits<double>::infinity();
    for (const Eigen::ArrayXXd& b : bins_) m = std::min(m, b.minCoeff());
    return m;
}

bool FibreField::all_finite() const {
    for (const Eigen::ArrayXXd& b : bins_)
        if (!b.allFinite()) return false;
    return true;
}

DirectionMeasure FibreField::measure_at(int ix, int iy) const {
    Eigen::VectorXd bins(n_theta_);
    for (int j = 0; j < n_theta_; ++j) bins(j) = bins_[j](iy, ix);
    return DirectionMeasure::from_bins(std::move(bins));
}

}  // namespace mesokin
