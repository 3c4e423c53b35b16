#include "mesokin/diffusion.hpp"

#include <cmath>

namespace mesokin {

Mat2 direction_covariance(const DirectionMeasure& q) {
    Mat2 acc = Mat2::Zero();
    auto outer = [](double angle) {
        Vec2 u(std::cos(angle), std::sin(angle));
        return Mat2(u * u.transpose());
    };
    for (const Atom& a : q.atoms()) acc += a.weight * outer(a.angle);
    const int n = q.n_bins();
    for (int j = 0; j < n; ++j) acc += q.bins()(j) * outer(DirectionMeasure::bin_center(j, n));
    return acc;
}

Mat2 diffusion_tensor(const DirectionMeasure& q, const SpeedMeasure& m, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("diffusion_tensor: mu must be positive");
    if (!q.is_normalized()) throw std::invalid_argument("diffusion_tensor: q not normalized");
    const Mat2 via_lift = lift(q, m).second_moment() / mu;
    const double sigma = m.second_moment() / mu;
    const Mat2 via_covariance = sigma * direction_covariance(q);
    if ((via_lift - via_covariance).cwiseAbs().maxCoeff() > 1e-12)
        throw NumericalError("diffusion_tensor: computation routes disagree");
    return 0.5 * (via_lift + via_lift.transpose());  // symmetrize round-off
}

double diffusion_stable_dt(const Grid& grid, const Mat2& d) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(d);
    const double lambda_max = es.eigenvalues().maxCoeff();
    if (lambda_max <= 0.0) return std::numeric_limits<double>::infinity();
    const double h = std::min(grid.dx, grid.dy);
    return h * h / (4.0 * lambda_max);
}

namespace {

DensityField diffusion_run(const DensityField& rho0, const TensorField& d, double dt,
                           double t_end, double lambda_max) {
    const Grid& g = rho0.grid;
    if (!(dt > 0.0)) throw ConfigError("diffusion_solve: dt must be positive");
    const double h = std::min(g.dx, g.dy);
    if (lambda_max > 0.0 && dt > h * h / (4.0 * lambda_max) * (1.0 + 1e-12))
        throw ConfigError("diffusion_solve: dt violates the explicit stability bound");

    const int nx = g.nx, ny = g.ny;
    auto xm = [nx](int i) { return Grid::wrap(i - 1, nx); };
    auto xp = [nx](int i) { return Grid::wrap(i + 1, nx); };
    auto ym = [ny](int j) { return Grid::wrap(j - 1, ny); };
    auto yp = [ny](int j) { return Grid::wrap(j + 1, ny); };

    DensityField out = rho0;
    const int n_steps = std::max(1, static_cast<int>(std::ceil(t_end / dt - 1e-9)));
    Eigen::ArrayXXd fx(ny, nx), fy(ny, nx);  // fluxes on the +x / +y faces
    for (int step = 0; step < n_steps; ++step) {
        const double step_dt = (step == n_steps - 1) ? t_end - step * dt : dt;
        const Eigen::ArrayXXd& r = out.rho;
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) {
                const int ip = xp(i), jp = yp(j);
                // face (i+1/2, j)
                const double dxx = 0.5 * (d.dxx(j, i) + d.dxx(j, ip));
                const double dxy_x = 0.5 * (d.dxy(j, i) + d.dxy(j, ip));
                const double grad_x = (r(j, ip) - r(j, i)) / g.dx;
                const double grad_y_face =
                    (r(yp(j), i) + r(yp(j), ip) - r(ym(j), i) - r(ym(j), ip)) / (4.0 * g.dy);
                fx(j, i) = dxx * grad_x + dxy_x * grad_y_face;
                // face (i, j+1/2)
                const double dyy = 0.5 * (d.dyy(j, i) + d.dyy(jp, i));
                const double dxy_y = 0.5 * (d.dxy(j, i) + d.dxy(jp, i));
                const double grad_y = (r(jp, i) - r(j, i)) / g.dy;
                const double grad_x_face =
                    (r(j, xp(i)) + r(jp, xp(i)) - r(j, xm(i)) - r(jp, xm(i))) / (4.0 * g.dx);
                fy(j, i) = dyy * grad_y + dxy_y * grad_x_face;
            }
        }
        Eigen::ArrayXXd next(ny, nx);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                next(j, i) = r(j, i) + step_dt * ((fx(j, i) - fx(j, xm(i))) / g.dx +
                                                  (fy(j, i) - fy(ym(j), i)) / g.dy);
        out.rho = std::move(next);
    }
    return out;
}

}  // namespace

DensityField diffusion_solve(const DensityField& rho0, const Mat2& d, double dt, double t_end) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(d);
    if (es.eigenvalues().minCoeff() < -1e-14)
        throw ConfigError("diffusion_solve: tensor not positive semidefinite");
    TensorField field{Eigen::ArrayXXd::Constant(rho0.grid.ny, rho0.grid.nx, d(0, 0)),
                      Eigen::ArrayXXd::Constant(rho0.grid.ny, rho0.grid.nx, d(0, 1)),
                      Eigen::ArrayXXd::Constant(rho0.grid.ny, rho0.grid.nx, d(1, 1))};
    return diffusion_run(rho0, field, dt, t_end, es.eigenvalues().maxCoeff());
}

DensityField diffusion_solve(const DensityField& rho0, const TensorField& d, double dt,
                             double t_end) {
    double lambda_max = 0.0;
    for (int j = 0; j < rho0.grid.ny; ++j) {
        for (int i = 0; i < rho0.grid.nx; ++i) {
            Mat2 m;
            m << d.dxx(j, i), d.dxy(j, i), d.dxy(j, i), d.dyy(j, i);
            Eigen::SelfAdjointEigenSolver<Mat2> es(m);
            if (es.eigenvalues().minCoeff() < -1e-14)
                throw ConfigError("diffusion_solve: tensor not positive semidefinite");
            lambda_max = std::max(lambda_max, es.eigenvalues().maxCoeff());
        }
    }
    return diffusion_run(rho0, d, dt, t_end, lambda_max);
}

std::vector<ConvergenceRow> convergence_experiment(const CellField& p0,
                                                   const DirectionMeasure& q, double mu,
                                                   const std::vector<double>& eps_list,
                                                   double t_end, double dt_coeff) {
    if (!q.is_symmetric())
        throw std::invalid_argument(
            "convergence_experiment: fibre distribution must be symmetric under theta -> -theta");
    const Grid& grid = p0.grid();
    const int nt = p0.n_theta();

    // diffusion reference from the initial mass density
    const Mat2 d = diffusion_tensor(q, p0.speeds(), mu);
    DensityField rho0{grid, p0.mass_density()};
    const double dt_diff = 0.5 * diffusion_stable_dt(grid, d);
    const DensityField rho_t = diffusion_solve(rho0, d, dt_diff, t_end);

    // weak test set: low-order trigonometric functions in x times the
    // direction basis
    const double kx = 2.0 * M_PI / grid.width();
    const double ky = 2.0 * M_PI / grid.height();
    std::vector<std::pair<std::function<double(double, double)>, std::function<double(double)>>>
        tests = {
            {[](double, double) { return 1.0; }, [](double t) { return std::cos(t); }},
            {[](double, double) { return 1.0; }, [](double t) { return std::sin(t); }},
            {[kx](double x, double) { return std::sin(kx * x); }, [](double) { return 1.0; }},
            {[ky](double, double y) { return std::sin(ky * y); }, [](double) { return 1.0; }},
            {[kx](double x, double) { return std::cos(kx * x); }, [](double) { return 1.0; }},
            {[kx](double x, double) { return std::sin(kx * x); },
             [](double t) { return std::cos(t); }},
            {[ky](double, double y) { return std::sin(ky * y); },
             [](double t) { return std::sin(t); }},
            {[kx, ky](double x, double y) { return std::cos(kx * x) * std::cos(ky * y); },
             [](double) { return 1.0; }},
        };

    FibreField q_field = FibreField::constant(grid, nt, q);
    std::vector<ConvergenceRow> rows;
    for (double eps : eps_list) {
        SimParams params;
        params.mu = mu;
        params.kappa = 0.0;
        params.epsilon = eps;
        params.speeds = p0.speeds();
        const double dt_target = dt_coeff * eps * eps;
        const int n_steps = std::max(1, static_cast<int>(std::ceil(t_end / dt_target - 1e-9)));
        params.dt = t_end / n_steps;

        SimState state{p0, q_field, 0.0};
        run(state, params, t_end);

        const Eigen::ArrayXXd pbar = state.p.mass_density();
        const double cell_area = grid.dx * grid.dy;
        const double l1 = (pbar - rho_t.rho).abs().sum() * cell_area;

        double weak = 0.0;
        // direction marginals of the deviation p_eps - rho q~ (the test set
        // does not depend on speed, so speed nodes collapse)
        std::vector<Eigen::ArrayXXd> marg(nt);
        for (int j = 0; j < nt; ++j)
            marg[j] = state.p.direction_marginal(j) - rho_t.rho * q_field.bin(j);
        for (const auto& [xf, tf] : tests) {
            double pairing = 0.0;
            for (int j = 0; j < nt; ++j) {
                const double tval = tf(DirectionMeasure::bin_center(j, nt));
                if (tval == 0.0) continue;
                double spatial = 0.0;
                for (int iy = 0; iy < grid.ny; ++iy)
                    for (int ix = 0; ix < grid.nx; ++ix)
                        spatial += xf(grid.x_center(ix), grid.y_center(iy)) * marg[j](iy, ix);
                pairing += tval * spatial * cell_area;
            }
            weak = std::max(weak, std::abs(pairing));
        }
        rows.push_back({eps, l1, weak, n_steps});
    }
    return rows;
}

}  // namespace mesokin
