#include "mesokin/steady.hpp"

#include <cmath>
#include <sstream>

namespace mesokin {

namespace {

double angle_of(const Vec2& v) { return wrap_angle(std::atan2(v.y(), v.x())); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

SteadyPair construct_homogeneous(double rho, const SpeedMeasure& m, int n_theta) {
    if (!(rho >= 0.0)) throw std::invalid_argument("construct_homogeneous: rho must be >= 0");
    DirectionMeasure q = DirectionMeasure::uniform(n_theta);
    return {lift(q, m).scaled(rho), q};
}

SteadyPair construct_aligned(const Vec2& gamma, double rho, const SpeedMeasure& m,
                             bool* normalized_warning) {
    if (!(rho >= 0.0)) throw std::invalid_argument("construct_aligned: rho must be >= 0");
    double norm = gamma.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("construct_aligned: zero direction");
    if (normalized_warning) *normalized_warning = std::abs(norm - 1.0) > 1e-12;
    DirectionMeasure q = DirectionMeasure::aligned(angle_of(gamma / norm));
    return {lift(q, m).scaled(rho), q};
}

Eigen::MatrixXd build_projection_matrix(const std::vector<Vec2>& directions) {
    const int n = static_cast<int>(directions.size());
    if (n < 2) throw std::invalid_argument("build_projection_matrix: need at least 2 directions");
    std::vector<Vec2> unit(directions);
    for (Vec2& d : unit) {
        double norm = d.norm();
        if (!(norm > 0.0)) throw std::invalid_argument("build_projection_matrix: zero direction");
        d /= norm;
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if ((unit[i] - unit[j]).norm() <= kAtomMergeTol)
                throw std::invalid_argument("build_projection_matrix: duplicate directions");
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i) {
        g(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            // |gamma_i . gamma_j| <= 1; clip the round-off spill of unit dots
            g(i, j) = g(j, i) = std::min(std::abs(unit[i].dot(unit[j])), 1.0);
        }
    }
    return g;
}

BalanceVerdict is_balanced_intersection(const Eigen::MatrixXd& gamma_matrix, double tol) {
    BalanceVerdict v;
    v.row_sums = gamma_matrix.rowwise().sum();
    v.spread = v.row_sums.maxCoeff() - v.row_sums.minCoeff();
    v.balanced = v.spread <= tol;
    return v;
}

IntersectionReport classify_intersection(const IntersectionSpec& spec, double tol) {
    const int n = static_cast<int>(spec.directions.size());
    if (n < 2) throw std::invalid_argument("classify_intersection: need at least 2 directions");

    Eigen::VectorXd w = spec.weights;
    if (w.size() == 0) w = Eigen::VectorXd::Constant(n, 1.0 / n);
    if (w.size() != n)
        throw std::invalid_argument("classify_intersection: weight count mismatch");
    if (w.minCoeff() < 0.0 || std::abs(w.sum() - 1.0) > kNormTol)
        throw std::invalid_argument("classify_intersection: weights must be nonnegative and sum to 1");

    IntersectionReport rep;
    rep.balance = is_balanced_intersection(build_projection_matrix(spec.directions), tol);

    const double weight_spread = w.maxCoeff() - w.minCoeff();
    rep.weights_admissible = weight_spread <= tol;
    std::ostringstream text;
    text << "intersection of " << n << (spec.symmetric ? " symmetric" : " unsymmetric")
         << " directions\n";
    if (!rep.weights_admissible && n == 2) {
        // unequal two-direction weights are stationary only for parallel lines
        double g12 = std::abs(spec.directions[0].normalized().dot(spec.directions[1].normalized()));
        if (std::abs(g12 - 1.0) <= tol) {
            rep.weights_admissible = true;
            text << "weights: unequal but directions parallel, admissible\n";
        } else {
            text << "weights: alpha != 1/2 with non-parallel directions, inadmissible\n";
        }
    } else {
        text << (rep.weights_admissible ? "weights: equal\n"
                                        : "weights: unequal (analysis covers equal weights)\n");
    }

    if (n == 3) {
        rep.named_condition_applies = true;
        rep.named_condition = "equal-angle";
        const Eigen::MatrixXd g = build_projection_matrix(spec.directions);
        rep.named_condition_holds = std::abs(g(0, 1) - g(1, 2)) <= tol &&
                                    std::abs(g(1, 2) - g(2, 0)) <= tol;
    } else if (n == 4) {
        rep.named_condition_applies = true;
        rep.named_condition = "pairwise-equal-angle";
        const Eigen::MatrixXd g = build_projection_matrix(spec.directions);
        rep.named_condition_holds = std::abs(g(0, 1) - g(2, 3)) <= tol &&
                                    std::abs(g(0, 2) - g(1, 3)) <= tol &&
                                    std::abs(g(0, 3) - g(1, 2)) <= tol;
    }

    rep.admissible = rep.weights_admissible && rep.balance.balanced;

    text << "row sums:";
    for (Eigen::Index i = 0; i < rep.balance.row_sums.size(); ++i)
        text << " " << fmt(rep.balance.row_sums(i));
    text << "\nrow-sum spread: " << fmt(rep.balance.spread) << " (tol " << fmt(tol) << ")\n";
    text << "balance: " << (rep.balance.balanced ? "holds" : "fails") << "\n";
    if (rep.named_condition_applies)
        text << rep.named_condition << ": " << (rep.named_condition_holds ? "holds" : "fails")
             << "\n";
    text << "verdict: " << (rep.admissible ? "admissible" : "inadmissible") << "\n";
    rep.text = text.str();

    rep.records = {{"n", std::to_string(n)},
                   {"symmetric", spec.symmetric ? "1" : "0"},
                   {"weights_admissible", rep.weights_admissible ? "1" : "0"},
                   {"balanced", rep.balance.balanced ? "1" : "0"},
                   {"row_sum_spread", fmt(rep.balance.spread)},
                   {"admissible", rep.admissible ? "1" : "0"}};
    if (rep.named_condition_applies)
        rep.records.emplace_back(rep.named_condition, rep.named_condition_holds ? "1" : "0");
    return rep;
}

std::pair<double, double> residual_pointwise(const VelocityMeasure& p, const DirectionMeasure& q,
                                             int basis_size, double mu) {
    const double pbar = mass_bar(p);
    const double b = alignment_B(p, q);

    // pairing of a continuous function against a measure, atoms exact,
    // bins by midpoint
    auto pair_with_q = [&](auto&& f) {
        double acc = 0.0;
        for (const Atom& a : q.atoms()) acc += a.weight * f(a.angle);
        const int n = q.n_bins();
        for (int j = 0; j < n; ++j)
            acc += q.bins()(j) * f(DirectionMeasure::bin_center(j, n));
        return acc;
    };
    auto pair_with_p = [&](auto&& f) {
        double acc = 0.0;
        for (int k = 0; k < p.n_speed_nodes(); ++k) {
            const DirectionMeasure& part = p.part(k);
            for (const Atom& a : part.atoms()) acc += a.weight * f(a.angle);
            const int n = part.n_bins();
            for (int j = 0; j < n; ++j)
                acc += part.bins()(j) * f(DirectionMeasure::bin_center(j, n));
        }
        return acc;
    };

    double r_q = 0.0, r_p = 0.0;
    for (int k = 0; k <= basis_size; ++k) {
        for (int phase = 0; phase < (k == 0 ? 1 : 2); ++phase) {
            auto psi = [&](double theta) {
                return phase == 0 ? std::cos(k * theta) : std::sin(k * theta);
            };
            r_q = std::max(r_q, std::abs(pair_with_q([&](double theta) {
                             return (lambda_at(p, theta) - b) * psi(theta);
                         })));
            r_p = std::max(r_p, mu * std::abs(pbar * pair_with_q(psi) - pair_with_p(psi)));
        }
    }
    return {r_q, r_p};
}

namespace {

Vec2 geometric_tangent(const NetworkSpec::Curve& c, std::size_t i) {
    const std::size_t n = c.vertices.size();
    Vec2 prev, next;
    if (c.closed) {
        prev = c.vertices[(i + n - 1) % n];
        next = c.vertices[(i + 1) % n];
    } else if (i == 0) {
        prev = c.vertices[0];
        next = c.vertices[1];
    } else if (i == n - 1) {
        prev = c.vertices[n - 2];
        next = c.vertices[n - 1];
    } else {
        prev = c.vertices[i - 1];
        next = c.vertices[i + 1];
    }
    Vec2 d = next - prev;
    double norm = d.norm();
    if (!(norm > 0.0)) throw std::invalid_argument("patchy network: degenerate polyline edge");
    return d / norm;
}

}  // namespace

NetworkReport validate_patchy_network(const NetworkSpec& net, double tol) {
    NetworkReport rep;
    std::ostringstream text;

    for (std::size_t c = 0; c < net.curves.size(); ++c) {
        const auto& curve = net.curves[c];
        if (curve.vertices.size() < 2 || curve.vertices.size() != curve.tangents.size())
            throw std::invalid_argument("patchy network: malformed polyline");
        if (curve.rho < 0.0) {
            rep.violations.push_back("curve " + std::to_string(c) + ": negative density");
            continue;
        }
        for (std::size_t i = 0; i < curve.vertices.size(); ++i) {
            Vec2 t = curve.tangents[i];
            double norm = t.norm();
            if (!(norm > 0.0)) throw std::invalid_argument("patchy network: zero tangent");
            t /= norm;
            // aligned state along the curve: the outward normal must
            // annihilate supp p, i.e. the stated tangent must follow the
            // polyline direction (up to sign)
            const Vec2 geo = geometric_tangent(curve, i);
            const double cross = std::abs(t.x() * geo.y() - t.y() * geo.x());
            if (cross > tol)
                rep.violations.push_back("curve " + std::to_string(c) + " vertex " +
                                         std::to_string(i) + ": tangency violation (|n.v| = " +
                                         fmt(cross) + ")");
        }
    }

    for (std::size_t i = 0; i < net.patches.size(); ++i) {
        const auto& patch = net.patches[i];
        if (patch.density < 0.0)
            rep.violations.push_back("patch " + patch.label + ": negative density");
        if (patch.unbounded && patch.density != 0.0)
            rep.violations.push_back("patch " + patch.label +
                                     ": unbounded patch must have zero density");
    }

    // intersections: coincident vertices of different curves (or endpoints of
    // the same open curve) meeting with at least two distinct tangents
    struct Meeting {
        Vec2 point;
        std::vector<Vec2> tangents;
    };
    std::vector<Meeting> meetings;
    const double pos_tol = 1e-9;
    auto register_vertex = [&](const Vec2& v, const Vec2& t) {
        for (Meeting& m : meetings) {
            if ((m.point - v).norm() <= pos_tol) {
                m.tangents.push_back(t);
                return;
            }
        }
        meetings.push_back({v, {t}});
    };
    for (const auto& curve : net.curves)
        for (std::size_t i = 0; i < curve.vertices.size(); ++i)
            register_vertex(curve.vertices[i], curve.tangents[i].normalized());

    for (const Meeting& m : meetings) {
        if (m.tangents.size() < 2) continue;
        // drop duplicate directions (a curve continuing straight through)
        std::vector<Vec2> dirs;
        for (const Vec2& t : m.tangents) {
            bool dup = false;
            for (const Vec2& d : dirs)
                if (std::abs(std::abs(d.dot(t)) - 1.0) <= 1e-12) dup = true;
            if (!dup) dirs.push_back(t);
        }
        if (dirs.size() < 2) continue;
        ++rep.intersections_checked;
        IntersectionSpec spec{dirs, Eigen::VectorXd(), true};
        IntersectionReport ir = classify_intersection(spec);
        if (!ir.admissible)
            rep.violations.push_back("intersection at (" + fmt(m.point.x()) + ", " +
                                     fmt(m.point.y()) + "): unbalanced (spread " +
                                     fmt(ir.balance.spread) + ")");
    }

    rep.valid = rep.violations.empty();
    text << "curves: " << net.curves.size() << ", patches: " << net.patches.size()
         << ", intersections checked: " << rep.intersections_checked << "\n";
    for (const std::string& v : rep.violations) text << "violation: " << v << "\n";
    text << "verdict: " << (rep.valid ? "valid" : "invalid") << "\n";
    rep.text = text.str();
    return rep;
}

AnsatzReport check_general_ansatz(const AnsatzField& field, const SpeedMeasure& m, int n_theta,
                                  double tol) {
    const Grid& grid = field.grid;
    if (field.f.minCoeff() < 0.0 || field.f.maxCoeff() > 1.0)
        throw std::invalid_argument("check_general_ansatz: f must lie in [0,1]");
    if (field.rho.minCoeff() < 0.0)
        throw std::invalid_argument("check_general_ansatz: rho must be nonnegative");

    AnsatzReport rep;
    // circle quadrature of the uniform part of the alignment integral,
    // evaluated at the angle of interest (carries the midpoint ripple)
    auto uniform_part = [n_theta](double theta) {
        double acc = 0.0;
        for (int j = 0; j < n_theta; ++j)
            acc += std::abs(std::cos(theta - DirectionMeasure::bin_center(j, n_theta))) / n_theta;
        return acc;
    };
    rep.quadrature_uniform = uniform_part(0.0);

    auto cell_measure = [&](int ix, int iy) {
        const double f = field.f(iy, ix);
        const double gamma = field.gamma_angle(iy, ix);
        Eigen::VectorXd bins = Eigen::VectorXd::Constant(n_theta, (1.0 - f) / n_theta);
        return DirectionMeasure::from_parts(
            {{gamma, f / 2.0}, {gamma + M_PI, f / 2.0}}, std::move(bins));
    };

    rep.c_min = std::numeric_limits<double>::infinity();
    rep.c_max = -rep.c_min;
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double f = field.f(iy, ix);
            const double gamma = field.gamma_angle(iy, ix);
            const double c = f + (1.0 - f) * uniform_part(gamma);
            rep.c_min = std::min(rep.c_min, c);
            rep.c_max = std::max(rep.c_max, c);
            const VelocityMeasure p = lift(cell_measure(ix, iy), m);
            const double resid = std::abs(lambda_at(p, gamma) - c);
            rep.max_condition_q_residual = std::max(rep.max_condition_q_residual, resid);
        }
    }
    rep.condition_q_ok = rep.max_condition_q_residual <= tol;

    // total variation distance between the node weights of rho * q~ in
    // neighboring cells, per unit length; atoms are matched by angle
    auto tv_between = [&](int ax, int ay, int bx, int by) {
        const double ra = field.rho(ay, ax), rb = field.rho(by, bx);
        if (ra == 0.0 || rb == 0.0) return 0.0;
        const double fa = field.f(ay, ax), fb = field.f(by, bx);
        const double ga = wrap_angle(field.gamma_angle(ay, ax));
        const double gb = wrap_angle(field.gamma_angle(by, bx));
        double tv = std::abs(ra * (1.0 - fa) - rb * (1.0 - fb));  // bins
        double da = std::min(std::abs(ga - gb), 2.0 * M_PI - std::abs(ga - gb));
        if (std::min(da, std::abs(da - M_PI)) <= 1e-12) {
            tv += std::abs(ra * fa - rb * fb);
        } else {
            tv += ra * fa + rb * fb;  // disjoint atom pairs
        }
        return tv;
    };
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const int ix1 = Grid::wrap(ix + 1, grid.nx);
            const int iy1 = Grid::wrap(iy + 1, grid.ny);
            rep.max_tv_gradient =
                std::max(rep.max_tv_gradient, tv_between(ix, iy, ix1, iy) / grid.dx);
            rep.max_tv_gradient =
                std::max(rep.max_tv_gradient, tv_between(ix, iy, ix, iy1) / grid.dy);
        }
    }
    rep.condition_rho_ok = rep.max_tv_gradient <= tol;

    std::ostringstream text;
    text << "alignment constant C in [" << fmt(rep.c_min) << ", " << fmt(rep.c_max)
         << "], uniform-part quadrature " << fmt(rep.quadrature_uniform) << " (analytic 2/pi = "
         << fmt(2.0 / M_PI) << ")\n";
    text << "condition on q: residual " << fmt(rep.max_condition_q_residual) << " -> "
         << (rep.condition_q_ok ? "holds" : "fails") << "\n";
    text << "condition on rho: max TV gradient " << fmt(rep.max_tv_gradient) << " -> "
         << (rep.condition_rho_ok ? "holds" : "fails") << "\n";
    rep.text = text.str();
    return rep;
}

}  // namespace mesokin
