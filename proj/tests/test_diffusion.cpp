#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mesokin/diffusion.hpp"

using namespace mesokin;

namespace {

std::mt19937_64 rng(90210);

DirectionMeasure random_normalized(int n_bins) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::VectorXd bins(n_bins);
    for (int j = 0; j < n_bins; ++j) bins(j) = u(rng);
    std::vector<Atom> atoms{{u(rng) * 2 * M_PI, u(rng)}, {u(rng) * 2 * M_PI, u(rng)}};
    DirectionMeasure q = DirectionMeasure::from_parts(atoms, bins);
    return q.scaled(1.0 / q.total_mass());
}

Eigen::ArrayXXd periodic_gaussian(const Grid& g, double sigma) {
    Eigen::ArrayXXd rho(g.ny, g.nx);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            double acc = 0.0;
            for (int ox = -1; ox <= 1; ++ox)
                for (int oy = -1; oy <= 1; ++oy) {
                    double x = g.x_center(ix) + ox * g.width();
                    double y = g.y_center(iy) + oy * g.height();
                    acc += std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
                }
            rho(iy, ix) = acc;
        }
    return rho;
}

}  // namespace

TEST_CASE("diffusion tensor") {
    const double mu = 1.3;

    SUBCASE("uniform network: (s^2 / 2 mu) I against the quadrature oracle") {
        for (double s : {1.0, 1.7}) {
            // independent midpoint quadrature of the covariance integral
            const int n = 128;
            Mat2 oracle = Mat2::Zero();
            for (int j = 0; j < n; ++j) {
                double t = 2.0 * M_PI * j / n;
                Vec2 u(std::cos(t), std::sin(t));
                oracle += (s * s / (mu * n)) * (u * u.transpose());
            }
            Mat2 d = diffusion_tensor(DirectionMeasure::uniform(n), SpeedMeasure::dirac(s), mu);
            CHECK((d - oracle).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK((d - (s * s / (2.0 * mu)) * Mat2::Identity()).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }

    SUBCASE("aligned network: rank-one tensor, atom exact") {
        const double angle = 0.6, s = 1.4;
        Vec2 gamma(std::cos(angle), std::sin(angle));
        Mat2 d = diffusion_tensor(DirectionMeasure::aligned(angle), SpeedMeasure::dirac(s), mu);
        Mat2 expected = (s * s / mu) * gamma * gamma.transpose();
        CHECK((d - expected).cwiseAbs().maxCoeff() <= 1e-14);
        Eigen::SelfAdjointEigenSolver<Mat2> es(d);
        CHECK(es.eigenvalues().minCoeff() <= 1e-14);  // singular
        CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(s * s / mu).epsilon(1e-13));
    }

    SUBCASE("trace equals sigma; tensors are PSD; antipodal flip leaves D unchanged") {
        for (int rep = 0; rep < 20; ++rep) {
            DirectionMeasure q = random_normalized(32);
            SpeedMeasure m = SpeedMeasure::from_nodes({{0.8, 0.3}, {1.6, 0.7}});
            Mat2 d = diffusion_tensor(q, m, mu);
            const double sigma = m.second_moment() / mu;
            CHECK(std::abs(d.trace() - sigma) <= 1e-12);
            Eigen::SelfAdjointEigenSolver<Mat2> es(d);
            CHECK(es.eigenvalues().minCoeff() >= -1e-14);
            Mat2 d_flip = diffusion_tensor(q.flipped(), m, mu);
            CHECK((d - d_flip).cwiseAbs().maxCoeff() <= 1e-15);
        }
    }
}

TEST_CASE("diffusion solver") {
    SUBCASE("zero tensor is the identity evolution") {
        Grid g(16, 16, 0.5, 0.5);
        DensityField rho0{g, periodic_gaussian(g, 1.0)};
        DensityField out = diffusion_solve(rho0, Mat2::Zero(), 0.01, 0.5);
        CHECK((out.rho - rho0.rho).abs().maxCoeff() == 0.0);
    }

    SUBCASE("mass conservation and positivity under the stability bound") {
        Grid g(32, 32, 0.25, 0.25);
        DensityField rho0{g, periodic_gaussian(g, 0.8)};
        Mat2 d;
        d << 0.5, 0.2, 0.2, 0.3;
        const double dt = 0.9 * diffusion_stable_dt(g, d);
        DensityField out = diffusion_solve(rho0, d, dt, 1.0);
        CHECK(std::abs(out.total_mass() - rho0.total_mass()) <= 1e-12 * rho0.total_mass());
        CHECK(out.rho.minCoeff() >= 0.0);
    }

    SUBCASE("stability violation is a configuration error") {
        Grid g(16, 16, 0.25, 0.25);
        DensityField rho0{g, periodic_gaussian(g, 0.8)};
        Mat2 d = 0.5 * Mat2::Identity();
        CHECK_THROWS_AS(diffusion_solve(rho0, d, 10.0 * diffusion_stable_dt(g, d), 1.0),
                        ConfigError);
        Mat2 indefinite;
        indefinite << 1.0, 2.0, 2.0, 1.0;
        CHECK_THROWS_AS(diffusion_solve(rho0, indefinite, 1e-4, 0.1), ConfigError);
    }

    SUBCASE("isotropic spread follows the heat kernel") {
        // variance grows by 2 d T per axis; compare against the analytic
        // kernel on a torus (image sum)
        Grid g(64, 64, 0.25, 0.25);
        const double sigma0 = 1.0, d_coeff = 0.5, t_end = 1.0;
        DensityField rho0{g, periodic_gaussian(g, sigma0)};
        Mat2 d = d_coeff * Mat2::Identity();
        DensityField out = diffusion_solve(rho0, d, 0.5 * diffusion_stable_dt(g, d), t_end);

        const double sigma_t = std::sqrt(sigma0 * sigma0 + 2.0 * d_coeff * t_end);
        Eigen::ArrayXXd exact =
            periodic_gaussian(g, sigma_t) * (sigma0 * sigma0 / (sigma_t * sigma_t));
        const double l1 = (out.rho - exact).abs().sum() / rho0.rho.sum();
        CHECK(l1 <= 0.01);
    }

    SUBCASE("rank-one tensor diffuses along its axis only") {
        Grid g(32, 32, 0.25, 0.25);
        DensityField rho0{g, periodic_gaussian(g, 0.8)};
        Mat2 d;
        d << 0.5, 0.0, 0.0, 0.0;  // diffusion along x only
        DensityField out =
            diffusion_solve(rho0, d, 0.5 * diffusion_stable_dt(g, d), 1.0);
        // y-marginal is exactly preserved
        Eigen::VectorXd before = rho0.rho.rowwise().sum();
        Eigen::VectorXd after = out.rho.rowwise().sum();
        CHECK((before - after).cwiseAbs().maxCoeff() <= 1e-12 * before.maxCoeff());
        // but x-marginal spreads
        Eigen::VectorXd bx = rho0.rho.colwise().sum();
        Eigen::VectorXd ax = out.rho.colwise().sum();
        CHECK((bx - ax).cwiseAbs().maxCoeff() > 1e-3 * bx.maxCoeff());
    }

    SUBCASE("per-cell tensor field variant") {
        Grid g(24, 24, 0.25, 0.25);
        DensityField rho0{g, periodic_gaussian(g, 0.8)};
        TensorField d{Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.4),
                      Eigen::ArrayXXd::Zero(g.ny, g.nx),
                      Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.2)};
        // strengthen diffusion in one half of the domain
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = g.nx / 2; ix < g.nx; ++ix) d.dxx(iy, ix) = 0.6;
        DensityField out = diffusion_solve(rho0, d, 0.01, 0.5);
        CHECK(std::abs(out.total_mass() - rho0.total_mass()) <= 1e-12 * rho0.total_mass());
    }
}

TEST_CASE("scaling-limit experiment plumbing") {
    Grid g(32, 32, 0.25, 0.25);
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    const int nt = 16;

    CellField p0(g, m, nt);
    Eigen::ArrayXXd rho0 = periodic_gaussian(g, 1.0);
    p0.slice(0, 0) = rho0;  // direction-concentrated bump

    SUBCASE("asymmetric fibre distributions are rejected") {
        DirectionMeasure asym = DirectionMeasure::from_atoms({{0.3, 1.0}});
        CHECK_THROWS_WITH_AS(convergence_experiment(p0, asym, 1.0, {0.5}, 0.5),
                             doctest::Contains("symmetric"), std::invalid_argument);
    }

    SUBCASE("single-epsilon run produces one finite row") {
        auto rows = convergence_experiment(p0, DirectionMeasure::uniform(nt), 1.0, {0.5}, 0.5);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].epsilon == 0.5);
        CHECK(std::isfinite(rows[0].l1_error));
        CHECK(std::isfinite(rows[0].weak_error));
        CHECK(rows[0].l1_error > 0.0);
        CHECK(rows[0].kinetic_steps >= 1);
    }

    SUBCASE("errors shrink from eps = 0.5 to eps = 0.25") {
        auto rows =
            convergence_experiment(p0, DirectionMeasure::uniform(nt), 1.0, {0.5, 0.25}, 0.5);
        REQUIRE(rows.size() == 2);
        CHECK(rows[1].l1_error < rows[0].l1_error);
        CHECK(rows[1].weak_error < rows[0].weak_error);
    }

    SUBCASE("aligned network: transverse spread stays small") {
        // fibres along the x-axis; mass marginal across the axis moves by
        // O(eps) + O(dx) only
        DirectionMeasure qa = DirectionMeasure::aligned(0.0);
        const double eps = 0.25, t_end = 1.0;
        SimParams params;
        params.mu = 1.0;
        params.kappa = 0.0;
        params.epsilon = eps;
        params.dt = 2.0 * eps * eps / 8.0;
        CellField iso(g, m, nt);
        for (int j = 0; j < nt; ++j) iso.slice(0, j) = rho0 / nt;
        SimState state{iso, FibreField::constant(g, nt, qa), 0.0};
        run(state, params, t_end);
        Eigen::VectorXd before = rho0.rowwise().sum() / rho0.sum();
        Eigen::ArrayXXd pbar = state.p.mass_density();
        Eigen::VectorXd after = pbar.rowwise().sum() / pbar.sum();
        const double l1 = (before - after).cwiseAbs().sum();
        CHECK(l1 <= 2.0 * (eps + g.dx));
    }
}
