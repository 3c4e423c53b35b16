#include "mesokin/measure.hpp"

#include <algorithm>
#include <cmath>

namespace mesokin {

double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * M_PI;
    a = std::fmod(a, two_pi);
    if (a < 0.0) a += two_pi;
    if (a >= two_pi) a = 0.0;  // fmod can return 2*pi - ulp after the add
    return a;
}

// --- DirectionMeasure ---

namespace {

void check_nonnegative(const std::vector<Atom>& atoms, const Eigen::VectorXd& bins) {
    for (const Atom& a : atoms) {
        if (!(a.weight >= 0.0)) throw std::invalid_argument("DirectionMeasure: negative atom weight");
    }
    if (bins.size() > 0 && !(bins.minCoeff() >= 0.0))
        throw std::invalid_argument("DirectionMeasure: negative bin mass");
}

std::vector<Atom> merge_atoms(std::vector<Atom> atoms) {
    for (Atom& a : atoms) a.angle = wrap_angle(a.angle);
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& a, const Atom& b) { return a.angle < b.angle; });
    std::vector<Atom> merged;
    for (const Atom& a : atoms) {
        if (!merged.empty() && a.angle - merged.back().angle <= kAtomMergeTol) {
            merged.back().weight += a.weight;
        } else {
            merged.push_back(a);
        }
    }
    // wrap-around pair: first near 0, last near 2*pi
    if (merged.size() >= 2) {
        double gap = merged.front().angle + 2.0 * M_PI - merged.back().angle;
        if (gap <= kAtomMergeTol) {
            merged.front().weight += merged.back().weight;
            merged.pop_back();
        }
    }
    return merged;
}

}  // namespace

DirectionMeasure DirectionMeasure::uniform(int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("uniform: n_bins must be positive");
    return from_bins(Eigen::VectorXd::Constant(n_bins, 1.0 / n_bins));
}

DirectionMeasure DirectionMeasure::from_bins(Eigen::VectorXd bins) {
    return from_parts({}, std::move(bins));
}

DirectionMeasure DirectionMeasure::from_atoms(std::vector<Atom> atoms) {
    return from_parts(std::move(atoms), Eigen::VectorXd());
}

DirectionMeasure DirectionMeasure::from_parts(std::vector<Atom> atoms, Eigen::VectorXd bins) {
    check_nonnegative(atoms, bins);
    DirectionMeasure q;
    q.atoms_ = merge_atoms(std::move(atoms));
    q.bins_ = std::move(bins);
    return q;
}

DirectionMeasure DirectionMeasure::aligned(double angle) {
    return from_atoms({{wrap_angle(angle), 0.5}, {wrap_angle(angle + M_PI), 0.5}});
}

double DirectionMeasure::total_mass() const {
    double m = bins_.size() > 0 ? bins_.sum() : 0.0;
    for (const Atom& a : atoms_) m += a.weight;
    return m;
}

double DirectionMeasure::atom_weight_at(double angle, double tol) const {
    angle = wrap_angle(angle);
    double w = 0.0;
    for (const Atom& a : atoms_) {
        double d = std::abs(a.angle - angle);
        d = std::min(d, 2.0 * M_PI - d);
        if (d <= tol) w += a.weight;
    }
    return w;
}

double DirectionMeasure::mass_with_atoms_in_bin(int j, int n) const {
    double m = (bins_.size() == n) ? bins_(j) : 0.0;
    if (bins_.size() > 0 && bins_.size() != n)
        throw std::invalid_argument("mass_with_atoms_in_bin: bin count mismatch");
    for (const Atom& a : atoms_) {
        if (bin_index(a.angle, n) == j) m += a.weight;
    }
    return m;
}

bool DirectionMeasure::is_symmetric(double tol) const {
    // symmetry under the antipodal map theta -> -theta on the unit circle
    const int n = n_bins();
    if (n % 2 == 0) {
        for (int j = 0; j < n; ++j)
            if (std::abs(bins_(j) - bins_((j + n / 2) % n)) > tol) return false;
    } else if (n > 0) {
        // the antipode of an odd-grid node is not a node; only the uniform
        // binned density is invariant
        for (int j = 1; j < n; ++j)
            if (std::abs(bins_(j) - bins_(0)) > tol) return false;
    }
    for (const Atom& a : atoms_) {
        if (std::abs(atom_weight_at(a.angle + M_PI, 1e-9) - a.weight) > tol) return false;
    }
    return true;
}

bool DirectionMeasure::is_normalized(double tol) const {
    return std::abs(total_mass() - 1.0) <= tol;
}

DirectionMeasure DirectionMeasure::scaled(double c) const {
    if (!(c >= 0.0)) throw std::invalid_argument("scaled: factor must be nonnegative");
    DirectionMeasure q;
    q.atoms_ = atoms_;
    for (Atom& a : q.atoms_) a.weight *= c;
    q.bins_ = bins_.size() > 0 ? Eigen::VectorXd(c * bins_) : bins_;
    return q;
}

DirectionMeasure DirectionMeasure::flipped() const {
    std::vector<Atom> atoms = atoms_;
    for (Atom& a : atoms) a.angle = wrap_angle(a.angle + M_PI);
    Eigen::VectorXd bins = bins_;
    const int n = n_bins();
    if (n % 2 != 0 && n > 0)
        throw std::invalid_argument("flipped: antipodal map needs an even bin count");
    for (int j = 0; j < n; ++j) bins(j) = bins_((j + n / 2) % n);
    return from_parts(std::move(atoms), std::move(bins));
}

double DirectionMeasure::bin_center(int j, int n) {
    return j * 2.0 * M_PI / n;
}

int DirectionMeasure::bin_index(double angle, int n) {
    // nearest node; bin j covers [(j-1/2), (j+1/2)) * 2*pi/n
    int j = static_cast<int>(std::lround(wrap_angle(angle) * n / (2.0 * M_PI)));
    return j % n;
}

// --- SpeedMeasure ---

SpeedMeasure SpeedMeasure::dirac(double speed) {
    return from_nodes({{speed, 1.0}});
}

SpeedMeasure SpeedMeasure::from_nodes(std::vector<SpeedNode> nodes) {
    if (nodes.empty()) throw std::invalid_argument("SpeedMeasure: no nodes");
    double total = 0.0;
    for (const SpeedNode& n : nodes) {
        if (!(n.speed > 0.0)) throw std::invalid_argument("SpeedMeasure: speeds must be positive");
        if (!(n.weight >= 0.0)) throw std::invalid_argument("SpeedMeasure: negative weight");
        total += n.weight;
    }
    if (std::abs(total - 1.0) > kNormTol)
        throw std::invalid_argument("SpeedMeasure: weights must sum to 1");
    SpeedMeasure m;
    m.nodes_ = std::move(nodes);
    return m;
}

double SpeedMeasure::max_speed() const {
    double s = 0.0;
    for (const SpeedNode& n : nodes_) s = std::max(s, n.speed);
    return s;
}

double SpeedMeasure::second_moment() const {
    double acc = 0.0;
    for (const SpeedNode& n : nodes_) acc += n.weight * n.speed * n.speed;
    return acc;
}

SpeedMeasure SpeedMeasure::scaled_speeds(double factor) const {
    std::vector<SpeedNode> nodes = nodes_;
    for (SpeedNode& n : nodes) n.speed *= factor;
    return from_nodes(std::move(nodes));
}

// --- VelocityMeasure ---

VelocityMeasure::VelocityMeasure(std::vector<double> speeds, std::vector<DirectionMeasure> parts)
    : speeds_(std::move(speeds)), parts_(std::move(parts)) {
    if (speeds_.size() != parts_.size())
        throw std::invalid_argument("VelocityMeasure: speeds/parts size mismatch");
}

double VelocityMeasure::mass() const {
    double m = 0.0;
    for (const DirectionMeasure& part : parts_) m += part.total_mass();
    return m;
}

Vec2 VelocityMeasure::first_moment() const {
    Vec2 acc = Vec2::Zero();
    for (int k = 0; k < n_speed_nodes(); ++k) {
        Vec2 dir = Vec2::Zero();
        const DirectionMeasure& part = parts_[k];
        for (const Atom& a : part.atoms()) dir += a.weight * Vec2(std::cos(a.angle), std::sin(a.angle));
        const int n = part.n_bins();
        for (int j = 0; j < n; ++j) {
            double c = DirectionMeasure::bin_center(j, n);
            dir += part.bins()(j) * Vec2(std::cos(c), std::sin(c));
        }
        acc += speeds_[k] * dir;
    }
    return acc;
}

Mat2 VelocityMeasure::second_moment() const {
    Mat2 acc = Mat2::Zero();
    for (int k = 0; k < n_speed_nodes(); ++k) {
        Mat2 dir = Mat2::Zero();
        const DirectionMeasure& part = parts_[k];
        auto outer = [](double angle) {
            Vec2 u(std::cos(angle), std::sin(angle));
            return Mat2(u * u.transpose());
        };
        for (const Atom& a : part.atoms()) dir += a.weight * outer(a.angle);
        const int n = part.n_bins();
        for (int j = 0; j < n; ++j) dir += part.bins()(j) * outer(DirectionMeasure::bin_center(j, n));
        acc += speeds_[k] * speeds_[k] * dir;
    }
    return acc;
}

VelocityMeasure VelocityMeasure::scaled(double c) const {
    std::vector<DirectionMeasure> parts;
    parts.reserve(parts_.size());
    for (const DirectionMeasure& part : parts_) parts.push_back(part.scaled(c));
    return VelocityMeasure(speeds_, std::move(parts));
}

// --- operations ---

double total_variation(const DirectionMeasure& mu) { return mu.total_mass(); }
double total_variation(const VelocityMeasure& mu) { return mu.mass(); }
double mass_bar(const VelocityMeasure& p) { return p.mass(); }

VelocityMeasure lift(const DirectionMeasure& q, const SpeedMeasure& m) {
    std::vector<double> speeds;
    std::vector<DirectionMeasure> parts;
    for (const SpeedNode& node : m.nodes()) {
        speeds.push_back(node.speed);
        parts.push_back(q.scaled(node.weight));
    }
    return VelocityMeasure(std::move(speeds), std::move(parts));
}

double lambda_at(const VelocityMeasure& p, double theta) {
    double acc = 0.0;
    for (int k = 0; k < p.n_speed_nodes(); ++k) {
        const DirectionMeasure& part = p.part(k);
        for (const Atom& a : part.atoms()) acc += a.weight * std::abs(std::cos(theta - a.angle));
        const int n = part.n_bins();
        for (int j = 0; j < n; ++j)
            acc += part.bins()(j) * std::abs(std::cos(theta - DirectionMeasure::bin_center(j, n)));
    }
    return acc;
}

Eigen::VectorXd lambda_at(const VelocityMeasure& p, const Eigen::VectorXd& thetas) {
    Eigen::VectorXd out(thetas.size());
    for (Eigen::Index i = 0; i < thetas.size(); ++i) out(i) = lambda_at(p, thetas(i));
    return out;
}

Eigen::VectorXd sampling_angles(const DirectionMeasure& q) {
    const int n = q.n_bins();
    Eigen::VectorXd angles(n + static_cast<int>(q.atoms().size()));
    for (int j = 0; j < n; ++j) angles(j) = DirectionMeasure::bin_center(j, n);
    for (std::size_t i = 0; i < q.atoms().size(); ++i) angles(n + i) = q.atoms()[i].angle;
    return angles;
}

double alignment_B(const VelocityMeasure& p, const DirectionMeasure& q) {
    double acc = 0.0;
    for (const Atom& a : q.atoms()) acc += a.weight * lambda_at(p, a.angle);
    const int n = q.n_bins();
    for (int j = 0; j < n; ++j)
        acc += q.bins()(j) * lambda_at(p, DirectionMeasure::bin_center(j, n));
    return acc;
}

VelocityMeasureDelta turning_apply(const DirectionMeasure& q, const SpeedMeasure& m,
                                   const VelocityMeasure& p) {
    return {lift(q, m).scaled(mass_bar(p)), p};
}

}  // namespace mesokin
