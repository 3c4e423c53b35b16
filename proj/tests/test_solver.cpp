#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mesokin/solver.hpp"

using namespace mesokin;

namespace {

std::mt19937_64 rng(77001);

CellField random_field(const Grid& g, const SpeedMeasure& m, int nt) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CellField p(g, m, nt);
    for (int kj = 0; kj < p.n_slices(); ++kj)
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) p.slice(kj)(iy, ix) = u(rng);
    return p;
}

FibreField random_fibres(const Grid& g, int nt) {
    std::uniform_real_distribution<double> u(0.2, 1.0);
    FibreField q(g, nt);
    for (int j = 0; j < nt; ++j)
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) q.bin(j)(iy, ix) = u(rng);
    q.normalize();
    return q;
}

double max_abs_diff(const CellField& a, const CellField& b) {
    double d = 0.0;
    for (int kj = 0; kj < a.n_slices(); ++kj)
        d = std::max(d, (a.slice(kj) - b.slice(kj)).abs().maxCoeff());
    return d;
}

}  // namespace

TEST_CASE("advection moves a grid-aligned pulse exactly one cell") {
    Grid g(8, 8, 0.5, 0.5);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    CellField p(g, m, 8);
    p.slice(0, 0)(3, 2) = 1.0;  // direction bin 0 points along +x exactly

    CellField moved = advect_step(p, g.dx, m, 1.0);
    CHECK(moved.slice(0, 0)(3, 3) == 1.0);
    CHECK(moved.slice(0, 0)(3, 2) == 0.0);

    CellField still = advect_step(p, 0.0, m, 1.0);
    CHECK(max_abs_diff(still, p) == 0.0);
}

TEST_CASE("advection conserves mass (direct summation oracle)") {
    Grid g(16, 12, 0.3, 0.4);
    SpeedMeasure m = SpeedMeasure::from_nodes({{0.7, 0.4}, {1.3, 0.6}});
    CellField p = random_field(g, m, 8);
    const double before = p.total_mass();
    CellField q = p;
    for (int i = 0; i < 25; ++i) q = advect_step(q, 0.0737, m, 1.0);
    CHECK(std::abs(q.total_mass() - before) <= 1e-13 * before);
    CHECK(q.min_value() >= 0.0);
}

TEST_CASE("advection rejects shifts beyond half the domain") {
    Grid g(8, 8, 0.25, 0.25);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    CellField p(g, m, 4);
    CHECK_THROWS_AS(advect_step(p, 2.0, m, 1.0), ConfigError);
    CHECK_THROWS_AS(advect_step(p, 0.5, m, 0.1), ConfigError);  // eps-scaled shift
}

TEST_CASE("turning relaxation") {
    Grid g(6, 6, 1.0, 1.0);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    const int nt = 8;
    CellField p = random_field(g, m, nt);
    FibreField q = random_fibres(g, nt);

    SUBCASE("dt = 0 is the identity") {
        CHECK(max_abs_diff(turning_step(p, q, 0.0, 1.0, 1.0), p) == 0.0);
    }
    SUBCASE("dt -> infinity fully aligns with the network") {
        CellField relaxed = turning_step(p, q, 1e4, 1.0, 1.0);
        Eigen::ArrayXXd pbar = p.mass_density();
        for (int j = 0; j < nt; ++j)
            CHECK((relaxed.slice(0, j) - pbar * q.bin(j)).abs().maxCoeff() <= 1e-12);
    }
    SUBCASE("per-cell mass is preserved") {
        CellField out = turning_step(p, q, 0.37, 1.7, 1.0);
        CHECK((out.mass_density() - p.mass_density()).abs().maxCoeff() <= 1e-13);
    }
    SUBCASE("semigroup property: three steps equal one triple step") {
        CellField three = turning_step(turning_step(turning_step(p, q, 0.2, 1.3, 1.0), q, 0.2, 1.3, 1.0),
                                       q, 0.2, 1.3, 1.0);
        CellField one = turning_step(p, q, 0.6, 1.3, 1.0);
        CHECK(max_abs_diff(three, one) <= 1e-12);
    }
    SUBCASE("commutes with scaling of p") {
        const double c = 2.75;
        CellField scaled = p;
        for (int kj = 0; kj < p.n_slices(); ++kj) scaled.slice(kj) = c * p.slice(kj);
        CellField a = turning_step(scaled, q, 0.4, 1.0, 1.0);
        CellField b = turning_step(p, q, 0.4, 1.0, 1.0);
        for (int kj = 0; kj < p.n_slices(); ++kj) b.slice(kj) *= c;
        CHECK(max_abs_diff(a, b) <= 1e-13 * c);
    }
}

TEST_CASE("epsilon scaling is a reparameterization (bit-compatible)") {
    Grid g(8, 8, 0.5, 0.5);
    const double eps = 0.5, mu = 1.3, dt = 0.05;
    SpeedMeasure m = SpeedMeasure::from_nodes({{1.0, 0.5}, {2.0, 0.5}});
    const int nt = 8;
    CellField p = random_field(g, m, nt);
    FibreField q = random_fibres(g, nt);

    CellField a = advect_step(p, dt, m, eps);
    CellField b = advect_step(p, dt, m.scaled_speeds(1.0 / eps), 1.0);
    CHECK(max_abs_diff(a, b) == 0.0);

    CellField ta = turning_step(p, q, dt, mu, eps);
    CellField tb = turning_step(p, q, dt, mu / (eps * eps), 1.0);
    CHECK(max_abs_diff(ta, tb) == 0.0);
}

TEST_CASE("fibre update") {
    Grid g(5, 4, 1.0, 1.0);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    const int nt = 16;

    SUBCASE("homogeneous cells leave the fibres unchanged") {
        CellField p(g, m, nt);
        for (int j = 0; j < nt; ++j) p.slice(0, j).setConstant(1.0 / nt);
        FibreField q = random_fibres(g, nt);
        FibreField out = fibre_step(q, p, 0.5, 5.0);
        for (int j = 0; j < nt; ++j)
            CHECK((out.bin(j) - q.bin(j)).abs().maxCoeff() <= 1e-13);
    }

    SUBCASE("normalization is exact and weight moves to the fitter direction") {
        CellField p(g, m, nt);
        p.slice(0, 0).setConstant(1.0);  // strongly anisotropic cells
        FibreField q = FibreField::uniform(g, nt);
        FibreField out = q;
        double w_prev = out.bin(0)(0, 0);
        for (int i = 0; i < 5; ++i) {
            out = fibre_step(out, p, 0.1, 5.0);
            CHECK((out.cell_mass() - 1.0).abs().maxCoeff() <= 1e-14);
            CHECK(out.bin(0)(0, 0) > w_prev);  // monotone gain for the aligned bin
            w_prev = out.bin(0)(0, 0);
        }
        CHECK(out.min_value() >= 0.0);
    }

    SUBCASE("replicator oracle: matches fine RK4 integration of the share ODE") {
        // frozen p, two active directions with different fitness
        CellField p(g, m, nt);
        p.slice(0, 0).setConstant(0.8);
        p.slice(0, 3).setConstant(0.4);
        FibreField q = random_fibres(g, nt);
        const double kappa = 2.0, t_final = 1.0;

        // lambda per bin at one cell (frozen over the integration)
        VelocityMeasure pm = p.measure_at(2, 1);
        Eigen::VectorXd fitness(nt);
        for (int j = 0; j < nt; ++j)
            fitness(j) = lambda_at(pm, DirectionMeasure::bin_center(j, nt));

        Eigen::VectorXd share(nt);
        for (int j = 0; j < nt; ++j) share(j) = q.bin(j)(1, 2);
        auto deriv = [&](const Eigen::VectorXd& y) {
            double b = fitness.dot(y);
            return Eigen::VectorXd(kappa * (fitness.array() - b) * y.array());
        };
        const int n_rk = 4000;
        const double h = t_final / n_rk;
        Eigen::VectorXd y = share;
        for (int i = 0; i < n_rk; ++i) {
            Eigen::VectorXd k1 = deriv(y);
            Eigen::VectorXd k2 = deriv(y + 0.5 * h * k1);
            Eigen::VectorXd k3 = deriv(y + 0.5 * h * k2);
            Eigen::VectorXd k4 = deriv(y + h * k3);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }

        FibreField out = fibre_step(q, p, t_final, kappa);
        for (int j = 0; j < nt; ++j) CHECK(std::abs(out.bin(j)(1, 2) - y(j)) <= 1e-8);
    }
}

TEST_CASE("pure transport returns the pulse around the torus") {
    Grid g(8, 8, 1.0, 1.0);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    SimParams params;
    params.mu = 0.0;
    params.kappa = 0.0;
    params.dt = 1.0;
    SimState state{CellField(g, m, 4), FibreField::uniform(g, 4), 0.0};
    state.p.slice(0, 0)(4, 1) = 2.0;
    CellField initial = state.p;
    run(state, params, 8.0);
    CHECK(max_abs_diff(state.p, initial) == 0.0);
    CHECK(state.time == doctest::Approx(8.0));
}

TEST_CASE("coupled smoke run keeps the structural invariants") {
    Grid g(16, 16, 0.25, 0.25);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    const int nt = 16;
    SimParams params;  // mu = 1, kappa = 5, dt = 0.1
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SimState state{CellField(g, m, nt), FibreField::uniform(g, nt), 0.0};
    for (int j = 0; j < nt; ++j)
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix)
                state.p.slice(0, j)(iy, ix) = (1.0 + 0.01 * u(rng)) / nt;

    const double mass0 = state.p.total_mass();
    int snapshots = 0;
    RunCallbacks cb;
    cb.snapshot_every = 10;
    cb.on_snapshot = [&](const SimState& s, int) {
        ++snapshots;
        CHECK(std::abs(s.p.total_mass() - mass0) <= 1e-10 * mass0);
        CHECK((s.q.cell_mass() - 1.0).abs().maxCoeff() <= 1e-12);
        CHECK(s.p.min_value() >= 0.0);
        CHECK(s.q.min_value() >= 0.0);
    };
    run(state, params, 5.0, cb);
    CHECK(snapshots >= 2);
}

TEST_CASE("runs abort with a diagnostic on corrupted state") {
    Grid g(8, 8, 1.0, 1.0);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    SimParams params;
    params.dt = 0.5;
    SimState state{CellField(g, m, 4), FibreField::uniform(g, 4), 0.0};
    state.p.slice(0, 0).setConstant(1.0);
    state.p.slice(0, 1)(2, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(run(state, params, 1.0), NumericalError);
}

TEST_CASE("strang splitting advances the same physics") {
    Grid g(16, 16, 0.5, 0.5);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    const int nt = 8;
    SimParams lie;
    lie.dt = 0.05;
    SimParams strang = lie;
    strang.splitting = Splitting::Strang;

    SimState a{random_field(g, m, nt), FibreField::uniform(g, nt), 0.0};
    SimState b = a;
    run(a, lie, 0.5);
    run(b, strang, 0.5);
    // both are consistent discretizations: fields stay close at small dt
    CHECK(max_abs_diff(a.p, b.p) <= 0.05 * a.p.mass_density().maxCoeff());
    CHECK(std::abs(a.p.total_mass() - b.p.total_mass()) <= 1e-10 * a.p.total_mass());
}
