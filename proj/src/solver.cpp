// Time integration of the coupled cell/fibre system on a periodic grid.
//
// Operator splitting with three sub-steps, each exact for its frozen
// sub-problem:
//   1. advection     - semi-Lagrangian translation of every velocity slice,
//                      periodic bilinear gather (sum-preserving on a uniform
//                      periodic grid, no CFL restriction),
//   2. turning       - exact exponential relaxation toward pbar * q~,
//   3. fibre update  - replicator step in normalized-exponential form,
//                      computed with a softmax shift so large kappa*dt cannot
//                      overflow.
//
// The scaled system is integrated by substituting mu/eps^2 for the turning
// rate and speed/eps for the transport speed; the eps = 1 and scaled
// parameterizations produce bit-identical updates.

#include "mesokin/solver.hpp"

#include <cmath>
#include <sstream>

namespace mesokin {

void SimParams::validate(const Grid& grid) const {
    if (!(mu >= 0.0)) throw ConfigError("params: mu must be nonnegative");
    if (!(kappa >= 0.0)) throw ConfigError("params: kappa must be nonnegative");
    if (!(dt > 0.0)) throw ConfigError("params: dt must be positive");
    if (!(epsilon > 0.0)) throw ConfigError("params: epsilon must be positive");
    double shift = dt * speeds.max_speed() / epsilon;
    if (shift > 0.5 * std::min(grid.width(), grid.height()))
        throw ConfigError("params: dt * max_speed / epsilon exceeds half the domain");
}

namespace {

// gather f at (x - shift) with periodic wrap; shift given in cell units
Eigen::ArrayXXd bilinear_shift(const Eigen::ArrayXXd& f, double sx, double sy) {
    const int nx = static_cast<int>(f.cols());
    const int ny = static_cast<int>(f.rows());
    const int ix0 = static_cast<int>(std::floor(sx));
    const int iy0 = static_cast<int>(std::floor(sy));
    const double fx = sx - ix0;
    const double fy = sy - iy0;
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
    const double w01 = (1 - fx) * fy, w11 = fx * fy;

    Eigen::ArrayXi sx0(nx), sx1(nx), sy0(ny), sy1(ny);
    for (int i = 0; i < nx; ++i) {
        sx0(i) = Grid::wrap(i - ix0, nx);
        sx1(i) = Grid::wrap(i - ix0 - 1, nx);
    }
    for (int j = 0; j < ny; ++j) {
        sy0(j) = Grid::wrap(j - iy0, ny);
        sy1(j) = Grid::wrap(j - iy0 - 1, ny);
    }

    Eigen::ArrayXXd g(ny, nx);
    for (int i = 0; i < nx; ++i) {
        const int i0 = sx0(i), i1 = sx1(i);
        for (int j = 0; j < ny; ++j) {
            g(j, i) = w00 * f(sy0(j), i0) + w10 * f(sy0(j), i1) + w01 * f(sy1(j), i0) +
                      w11 * f(sy1(j), i1);
        }
    }
    return g;
}

}  // namespace

CellField advect_step(const CellField& p, double dt, const SpeedMeasure& speeds, double epsilon) {
    const Grid& grid = p.grid();
    if (dt * speeds.max_speed() / epsilon > 0.5 * std::min(grid.width(), grid.height()))
        throw ConfigError("advect_step: shift exceeds half the domain");
    CellField out = p;
    for (int k = 0; k < speeds.size(); ++k) {
        const double se = speeds.nodes()[k].speed / epsilon;
        for (int j = 0; j < p.n_theta(); ++j) {
            const double theta = DirectionMeasure::bin_center(j, p.n_theta());
            const double sx = se * std::cos(theta) * dt / grid.dx;
            const double sy = se * std::sin(theta) * dt / grid.dy;
            out.slice(k, j) = bilinear_shift(p.slice(k, j), sx, sy);
        }
    }
    return out;
}

CellField turning_step(const CellField& p, const FibreField& q, double dt, double mu,
                       double epsilon) {
    const double rate = mu / (epsilon * epsilon);
    const double a = std::exp(-rate * dt);
    const Eigen::ArrayXXd redistribution = (1.0 - a) * p.mass_density();
    CellField out = p;
    for (int k = 0; k < p.speeds().size(); ++k) {
        const double mk = p.speeds().nodes()[k].weight;
        for (int j = 0; j < p.n_theta(); ++j)
            out.slice(k, j) = a * p.slice(k, j) + mk * redistribution * q.bin(j);
    }
    return out;
}

FibreField fibre_step(const FibreField& q, const CellField& p, double dt, double kappa) {
    const int nt = q.n_theta();
    if (p.n_theta() != nt) throw ConfigError("fibre_step: direction bin mismatch");
    const Grid& grid = q.grid();

    // fitness per bin: Lambda_j = sum_l |theta_j . theta_l| U_l with U the
    // direction marginal of p (speed magnitudes drop out)
    Eigen::MatrixXd proj(nt, nt);
    for (int j = 0; j < nt; ++j)
        for (int l = 0; l < nt; ++l)
            proj(j, l) = std::abs(std::cos(DirectionMeasure::bin_center(j, nt) -
                                           DirectionMeasure::bin_center(l, nt)));

    const int cells = grid.cells();
    Eigen::MatrixXd marginal(cells, nt);
    for (int j = 0; j < nt; ++j) {
        Eigen::ArrayXXd u = p.direction_marginal(j);
        marginal.col(j) = Eigen::Map<Eigen::VectorXd>(u.data(), cells);
    }
    Eigen::MatrixXd fitness = marginal * proj.transpose();

    const Eigen::VectorXd shift = fitness.rowwise().maxCoeff();
    FibreField out = q;
    Eigen::VectorXd norm = Eigen::VectorXd::Zero(cells);
    for (int j = 0; j < nt; ++j) {
        Eigen::VectorXd w =
            (kappa * dt * (fitness.col(j) - shift)).array().exp().matrix();
        Eigen::Map<Eigen::VectorXd> bj(out.bin(j).data(), cells);
        bj = bj.cwiseProduct(w);
        norm += bj;
    }
    for (int j = 0; j < nt; ++j) {
        Eigen::Map<Eigen::VectorXd> bj(out.bin(j).data(), cells);
        bj = bj.cwiseQuotient(norm);
    }
    return out;
}

namespace {

void check_health(const SimState& state, int step_index) {
    if (!state.p.all_finite() || !state.q.all_finite()) {
        std::ostringstream msg;
        msg << "run aborted: non-finite value at step " << step_index << " (t=" << state.time
            << ")";
        throw NumericalError(msg.str());
    }
    if (state.p.min_value() < 0.0 || state.q.min_value() < 0.0) {
        std::ostringstream msg;
        msg << "run aborted: negative component at step " << step_index << " (t=" << state.time
            << "), min p=" << state.p.min_value() << ", min q=" << state.q.min_value();
        throw NumericalError(msg.str());
    }
}

void step_dt(SimState& state, const SimParams& params, double dt) {
    if (params.splitting == Splitting::Lie) {
        state.p = advect_step(state.p, dt, params.speeds, params.epsilon);
        state.p = turning_step(state.p, state.q, dt, params.mu, params.epsilon);
        if (params.kappa > 0.0) state.q = fibre_step(state.q, state.p, dt, params.kappa);
    } else {
        state.p = advect_step(state.p, 0.5 * dt, params.speeds, params.epsilon);
        state.p = turning_step(state.p, state.q, dt, params.mu, params.epsilon);
        if (params.kappa > 0.0) state.q = fibre_step(state.q, state.p, dt, params.kappa);
        state.p = advect_step(state.p, 0.5 * dt, params.speeds, params.epsilon);
    }
    state.time += dt;
}

}  // namespace

void step(SimState& state, const SimParams& params) {
    params.validate(state.p.grid());
    step_dt(state, params, params.dt);
}

void run(SimState& state, const SimParams& params, double t_end, const RunCallbacks& callbacks) {
    params.validate(state.p.grid());
    if (t_end < state.time) throw ConfigError("run: t_end before current time");

    const double remaining = t_end - state.time;
    const int n_steps = std::max(1, static_cast<int>(std::ceil(remaining / params.dt - 1e-9)));

    if (callbacks.on_snapshot) callbacks.on_snapshot(state, 0);
    for (int i = 1; i <= n_steps; ++i) {
        const double dt = (i == n_steps) ? (t_end - state.time) : params.dt;
        if (dt <= 0.0) break;
        step_dt(state, params, dt);
        check_health(state, i);
        const bool due = callbacks.snapshot_every > 0 && i % callbacks.snapshot_every == 0;
        if (callbacks.on_snapshot && (due || i == n_steps)) callbacks.on_snapshot(state, i);
    }
}

}  // namespace mesokin
