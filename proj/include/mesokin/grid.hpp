#ifndef MESOKIN_GRID_HPP
#define MESOKIN_GRID_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "mesokin/measure.hpp"

namespace mesokin {

/// Uniform periodic 2D grid (flat torus).  Cell (ix, iy) is centered at
/// (x0 + (ix+1/2) dx, y0 + (iy+1/2) dy); the domain origin defaults to
/// centering the torus on (0,0).
struct Grid {
    int nx = 0, ny = 0;
    double dx = 0.0, dy = 0.0;

    Grid() = default;
    Grid(int nx_, int ny_, double dx_, double dy_) : nx(nx_), ny(ny_), dx(dx_), dy(dy_) {
        if (nx < 4 || ny < 4) throw std::invalid_argument("Grid: nx, ny must be >= 4");
        if (!(dx > 0.0) || !(dy > 0.0)) throw std::invalid_argument("Grid: dx, dy must be positive");
    }

    double width() const { return nx * dx; }
    double height() const { return ny * dy; }
    int cells() const { return nx * ny; }

    double x_center(int ix) const { return (ix + 0.5) * dx - 0.5 * width(); }
    double y_center(int iy) const { return (iy + 0.5) * dy - 0.5 * height(); }

    static int wrap(int i, int n) {
        i %= n;
        return i < 0 ? i + n : i;
    }

    /// Periodic bilinear interpolation of a cell-centered field at point p.
    double sample(const Eigen::ArrayXXd& f, const Vec2& p) const {
        // fractional cell coordinates relative to cell centers
        double u = (p.x() + 0.5 * width()) / dx - 0.5;
        double v = (p.y() + 0.5 * height()) / dy - 0.5;
        int i0 = static_cast<int>(std::floor(u));
        int j0 = static_cast<int>(std::floor(v));
        double fu = u - i0, fv = v - j0;
        int i1 = wrap(i0 + 1, nx), j1 = wrap(j0 + 1, ny);
        i0 = wrap(i0, nx);
        j0 = wrap(j0, ny);
        return (1 - fu) * (1 - fv) * f(j0, i0) + fu * (1 - fv) * f(j0, i1) +
               (1 - fu) * fv * f(j1, i0) + fu * fv * f(j1, i1);
    }
};

}  // namespace mesokin

#endif
