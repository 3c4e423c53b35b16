#include "mesokin/characteristics.hpp"

#include <cmath>

namespace mesokin {

PrescribedFibreField PrescribedFibreField::constant(const DirectionMeasure& q) {
    if (!q.is_normalized())
        throw std::invalid_argument("PrescribedFibreField: measure not normalized");
    PrescribedFibreField f;
    f.eval = [q](const Vec2&, double) { return q; };
    f.constant_in_time = true;
    f.constant_in_space = true;
    return f;
}

Vec2 VelocityDatum::node_velocity(int k, int j) const {
    double theta = DirectionMeasure::bin_center(j, n_theta);
    return speeds.nodes()[k].speed * Vec2(std::cos(theta), std::sin(theta));
}

double VelocityDatum::shifted_mass(const Vec2& x, double t) const {
    double acc = 0.0;
    for (int k = 0; k < speeds.size(); ++k)
        for (int j = 0; j < n_theta; ++j) acc += node_density(x - t * node_velocity(k, j), k, j);
    return acc;
}

VelocityDatum VelocityDatum::from_cell_field(const CellField& p0) {
    VelocityDatum d;
    d.n_theta = p0.n_theta();
    d.speeds = p0.speeds();
    // copy the field into the closure so the datum owns its data
    d.node_density = [p0](const Vec2& x, int k, int j) { return p0.grid().sample(p0.slice(k, j), x); };
    return d;
}

VelocityDatum VelocityDatum::isotropic(int n_theta, const SpeedMeasure& m,
                                       std::function<double(const Vec2&)> rho0) {
    VelocityDatum d;
    d.n_theta = n_theta;
    d.speeds = m;
    d.node_density = [n_theta, m, rho0 = std::move(rho0)](const Vec2& x, int k, int) {
        return rho0(x) * m.nodes()[k].weight / n_theta;
    };
    return d;
}

VelocityDatum VelocityDatum::single_bin(int n_theta, const SpeedMeasure& m, int j0,
                                        std::function<double(const Vec2&)> rho0) {
    VelocityDatum d;
    d.n_theta = n_theta;
    d.speeds = m;
    d.node_density = [m, j0, rho0 = std::move(rho0)](const Vec2& x, int k, int j) {
        return j == j0 ? rho0(x) * m.nodes()[k].weight : 0.0;
    };
    return d;
}

namespace {

// integral over [s_a, s_b] of mu exp(-mu (t - s)) * linear interpolant of g
// I0: weight of g_a + g_b combined; I1: weight of the (s - s_a)/h part
struct ExpTrapezoid {
    double i0, i1;
    ExpTrapezoid(double t, double sa, double sb, double mu) {
        const double h = sb - sa;
        const double z = mu * h;
        const double base = std::exp(-mu * (t - sa));
        i0 = std::exp(-mu * (t - sb)) - base;
        if (z > 1e-5) {
            i1 = base * (std::exp(z) - std::expm1(z) / z);
        } else {
            // series of e^z - (e^z - 1)/z for small z
            i1 = base * (z / 2.0 + z * z / 3.0 + z * z * z / 8.0);
        }
    }
};

// directions sampled by the explicit solution: bin nodes plus atom angles
struct NodeSet {
    int n_theta;
    std::vector<double> atom_angles;

    explicit NodeSet(const DirectionMeasure& ref) : NodeSet(ref.n_bins(), ref) {}
    NodeSet(int n_theta_, const DirectionMeasure& ref) : n_theta(n_theta_) {
        for (const Atom& a : ref.atoms()) atom_angles.push_back(a.angle);
    }
    int n_dirs() const { return n_theta + static_cast<int>(atom_angles.size()); }
    double angle(int d) const {
        return d < n_theta ? DirectionMeasure::bin_center(d, n_theta)
                           : atom_angles[d - n_theta];
    }
    // mass the measure assigns to direction node d
    double weight(const DirectionMeasure& q, int d) const {
        if (d < n_theta) return q.n_bins() > 0 ? q.bins()(d) : 0.0;
        return q.atom_weight_at(atom_angles[d - n_theta]);
    }
};

}  // namespace

double kernel_K(const Vec2& x, double t, const PrescribedFibreField& q, double mu,
                const SpeedMeasure& m, int quad_steps) {
    if (quad_steps < 2) throw ConfigError("kernel_K: quad_steps must be >= 2");
    if (!(t >= 0.0)) throw std::invalid_argument("kernel_K: t must be nonnegative");
    if (t == 0.0) return 0.0;

    DirectionMeasure ref = q.eval(x, t);
    if (ref.n_bins() == 0 && ref.atoms().empty())
        throw std::invalid_argument("kernel_K: empty fibre measure");
    NodeSet nodes(ref);

    // diagonal evaluation g(s) = sum over velocity nodes of the node weight
    // of q(x - v (t - s), s)
    auto g = [&](double s) {
        double acc = 0.0;
        for (const SpeedNode& sn : m.nodes()) {
            for (int d = 0; d < nodes.n_dirs(); ++d) {
                const double a = nodes.angle(d);
                const Vec2 v = sn.speed * Vec2(std::cos(a), std::sin(a));
                const Vec2 y = x - (t - s) * v;
                acc += sn.weight * nodes.weight(q.eval(y, s), d);
            }
        }
        return acc;
    };

    const double h = t / quad_steps;
    double k_total = 0.0;
    double g_prev = g(0.0);
    for (int i = 0; i < quad_steps; ++i) {
        const double sa = i * h, sb = (i + 1) * h;
        const double g_next = g(sb);
        ExpTrapezoid w(t, sa, sb, mu);
        k_total += g_prev * (w.i0 - w.i1) + g_next * w.i1;
        g_prev = g_next;
    }
    return k_total;
}

double huygens_pbar(const Vec2& x, double t, const VelocityDatum& p0,
                    const PrescribedFibreField& q) {
    if (!q.constant_q())
        throw std::logic_error("huygens_pbar: requires a constant fibre distribution");
    return p0.shifted_mass(x, t);
}

double pbar_general(const Vec2& x, double t, const VelocityDatum& p0,
                    const PrescribedFibreField& q, double mu, int quad_steps) {
    const double k = kernel_K(x, t, q, mu, p0.speeds, quad_steps);
    if (std::abs(1.0 - k) <= kKernelGuard)
        throw SingularKernelError("pbar_general: 1 - K(x,t) inside guard");
    return std::exp(-mu * t) * p0.shifted_mass(x, t) / (1.0 - k);
}

VelocityMeasure explicit_solution(const Vec2& x, double t, const VelocityDatum& p0,
                                  const PrescribedFibreField& q, double mu, int quad_steps) {
    if (quad_steps < 2) throw ConfigError("explicit_solution: quad_steps must be >= 2");
    DirectionMeasure ref = q.eval(x, t);
    if (ref.n_bins() != 0 && ref.n_bins() != p0.n_theta)
        throw std::invalid_argument("explicit_solution: direction bin mismatch");
    // the datum's bin grid always contributes ballistic nodes, the fibre
    // field's atoms contribute redistribution-only nodes
    NodeSet nodes(p0.n_theta, ref);

    const double k = kernel_K(x, t, q, mu, p0.speeds, quad_steps);
    if (std::abs(1.0 - k) <= kKernelGuard)
        throw SingularKernelError("explicit_solution: 1 - K(x,t) inside guard");
    const double emt = std::exp(-mu * t);
    const double coeff = mu * emt * p0.shifted_mass(x, t) / (1.0 - k);

    const double h = t / quad_steps;
    std::vector<double> speeds;
    std::vector<DirectionMeasure> parts;
    for (int kk = 0; kk < p0.speeds.size(); ++kk) {
        const SpeedNode& sn = p0.speeds.nodes()[kk];
        Eigen::VectorXd bins = Eigen::VectorXd::Zero(p0.n_theta);
        std::vector<Atom> atoms;
        for (int d = 0; d < nodes.n_dirs(); ++d) {
            const double angle = nodes.angle(d);
            const Vec2 v = sn.speed * Vec2(std::cos(angle), std::sin(angle));
            // history integral of the node weight of q~ along the backward
            // characteristic, without the mu factor (it sits in coeff)
            double hist = 0.0;
            if (t > 0.0) {
                double g_prev = sn.weight * nodes.weight(q.eval(x - t * v, 0.0), d);
                for (int i = 0; i < quad_steps; ++i) {
                    const double sa = i * h, sb = (i + 1) * h;
                    const double g_next = sn.weight * nodes.weight(q.eval(x - (t - sb) * v, sb), d);
                    ExpTrapezoid w(t, sa, sb, mu);
                    hist += g_prev * (w.i0 - w.i1) + g_next * w.i1;
                    g_prev = g_next;
                }
                hist /= mu;
            }
            double value = coeff * hist;
            if (d < p0.n_theta) {
                value += emt * p0.node_density(x - t * v, kk, d);
                bins(d) = value;
            } else if (value != 0.0) {
                atoms.push_back({angle, value});
            }
        }
        speeds.push_back(sn.speed);
        parts.push_back(DirectionMeasure::from_parts(std::move(atoms), std::move(bins)));
    }
    return VelocityMeasure(std::move(speeds), std::move(parts));
}

VelocityMeasure constant_q_solution(const Vec2& x, double t, const VelocityDatum& p0,
                                    const DirectionMeasure& q, double mu) {
    if (!q.is_normalized())
        throw std::invalid_argument("constant_q_solution: measure not normalized");
    if (q.n_bins() != 0 && q.n_bins() != p0.n_theta)
        throw std::invalid_argument("constant_q_solution: direction bin mismatch");
    const double emt = std::exp(-mu * t);
    const double pbar = p0.shifted_mass(x, t);
    const double redistributed = (1.0 - emt) * pbar;

    std::vector<double> speeds;
    std::vector<DirectionMeasure> parts;
    for (int k = 0; k < p0.speeds.size(); ++k) {
        const SpeedNode& sn = p0.speeds.nodes()[k];
        Eigen::VectorXd bins = Eigen::VectorXd::Zero(p0.n_theta);
        for (int j = 0; j < p0.n_theta; ++j) {
            bins(j) = emt * p0.node_density(x - t * p0.node_velocity(k, j), k, j);
            if (q.n_bins() > 0) bins(j) += redistributed * sn.weight * q.bins()(j);
        }
        std::vector<Atom> atoms;
        for (const Atom& a : q.atoms())
            atoms.push_back({a.angle, redistributed * sn.weight * a.weight});
        speeds.push_back(sn.speed);
        parts.push_back(DirectionMeasure::from_parts(std::move(atoms), std::move(bins)));
    }
    return VelocityMeasure(std::move(speeds), std::move(parts));
}

}  // namespace mesokin
