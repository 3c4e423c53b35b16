#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mesokin/steady.hpp"

using namespace mesokin;

namespace {

std::mt19937_64 rng(431002);

Vec2 unit(double angle) { return Vec2(std::cos(angle), std::sin(angle)); }

std::vector<Vec2> units(std::initializer_list<double> degrees) {
    std::vector<Vec2> out;
    for (double d : degrees) out.push_back(unit(d * M_PI / 180.0));
    return out;
}

}  // namespace

TEST_CASE("constructed states are stationary") {
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    SUBCASE("homogeneous") {
        SteadyPair zero = construct_homogeneous(0.0, m, 32);
        CHECK(mass_bar(zero.p) == 0.0);
        for (int rep = 0; rep < 20; ++rep) {
            double rho = 5.0 * u(rng);
            SteadyPair s = construct_homogeneous(rho, m, 128);
            CHECK(mass_bar(s.p) == doctest::Approx(rho).epsilon(1e-13));
            auto [rq, rp] = residual_pointwise(s.p, s.q);
            CHECK(rq <= 1e-10);
            CHECK(rp <= 1e-10);
        }
        CHECK_THROWS_AS(construct_homogeneous(-1.0, m, 16), std::invalid_argument);
    }

    SUBCASE("strictly aligned") {
        for (int rep = 0; rep < 20; ++rep) {
            double rho = 5.0 * u(rng);
            double angle = 2.0 * M_PI * u(rng);
            SteadyPair s = construct_aligned(unit(angle), rho, m);
            // lambda is rho |theta . gamma| at sampled angles
            for (double theta : {0.0, 0.9, 2.5})
                CHECK(lambda_at(s.p, theta) ==
                      doctest::Approx(rho * std::abs(std::cos(theta - angle))).epsilon(1e-12));
            CHECK(alignment_B(s.p, s.q) == doctest::Approx(rho).epsilon(1e-12));
            auto [rq, rp] = residual_pointwise(s.p, s.q);
            CHECK(rq <= 1e-12 * std::max(1.0, rho));
            CHECK(rp <= 1e-12 * std::max(1.0, rho));
        }
        bool warned = false;
        construct_aligned(Vec2(3.0, 0.0), 1.0, m, &warned);
        CHECK(warned);
        construct_aligned(Vec2(1.0, 0.0), 1.0, m, &warned);
        CHECK(!warned);
    }
}

TEST_CASE("projection matrix") {
    SUBCASE("two directions: (1,1) is an eigenvector") {
        for (int rep = 0; rep < 10; ++rep) {
            std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
            double a = u(rng), b = u(rng);
            if (std::abs(std::abs(std::cos(a - b)) - 1.0) < 1e-9) continue;
            Eigen::MatrixXd g = build_projection_matrix({unit(a), unit(b)});
            const double lambda = 1.0 + g(0, 1);
            Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
            CHECK(((g * ones) - lambda * ones).cwiseAbs().maxCoeff() <= 1e-14);
            CHECK(is_balanced_intersection(g).balanced);
        }
    }
    SUBCASE("orthogonal pair and equal-angle triple") {
        Eigen::MatrixXd g = build_projection_matrix(units({0, 90}));
        CHECK(g(0, 1) == doctest::Approx(0.0).epsilon(1e-15));
        Eigen::MatrixXd g3 = build_projection_matrix(units({0, 60, 120}));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) CHECK(g3(i, j) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(is_balanced_intersection(g3).balanced);
    }
    SUBCASE("duplicates rejected, antiparallel allowed") {
        CHECK_THROWS_AS(build_projection_matrix({unit(0.3), unit(0.3)}), std::invalid_argument);
        CHECK_NOTHROW(build_projection_matrix({unit(0.3), unit(0.3 + M_PI)}));
    }
    SUBCASE("symmetry, unit diagonal, entries in [0,1] for random inputs") {
        std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<Vec2> dirs;
            for (int i = 0; i < 5; ++i) dirs.push_back(unit(u(rng)));
            Eigen::MatrixXd g = build_projection_matrix(dirs);
            CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
            CHECK((g.diagonal().array() == 1.0).all());
            CHECK(g.minCoeff() >= 0.0);
            CHECK(g.maxCoeff() <= 1.0);
        }
    }
    SUBCASE("0/45/90 is unbalanced with the known row sums") {
        BalanceVerdict v = is_balanced_intersection(build_projection_matrix(units({0, 45, 90})));
        CHECK(!v.balanced);
        const double s = std::sqrt(2.0);
        CHECK(v.row_sums(0) == doctest::Approx(1.0 + s / 2.0).epsilon(1e-12));
        CHECK(v.row_sums(1) == doctest::Approx(1.0 + s).epsilon(1e-12));
        CHECK(v.row_sums(2) == doctest::Approx(1.0 + s / 2.0).epsilon(1e-12));
    }
    SUBCASE("balance is invariant under relabeling, rotation, and sign flips") {
        std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<Vec2> dirs = {unit(u(rng)), unit(u(rng)), unit(u(rng)), unit(u(rng))};
            BalanceVerdict base = is_balanced_intersection(build_projection_matrix(dirs));

            std::vector<Vec2> shuffled = {dirs[2], dirs[0], dirs[3], dirs[1]};
            std::vector<Vec2> rotated, flipped;
            const double phi = u(rng);
            Eigen::Rotation2D<double> rot(phi);
            for (const Vec2& d : dirs) rotated.push_back(rot * d);
            for (std::size_t i = 0; i < dirs.size(); ++i)
                flipped.push_back(i % 2 == 0 ? Vec2(-dirs[i]) : dirs[i]);

            for (const auto& variant : {shuffled, rotated, flipped}) {
                BalanceVerdict v = is_balanced_intersection(build_projection_matrix(variant));
                CHECK(v.balanced == base.balanced);
                CHECK(v.spread == doctest::Approx(base.spread).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("intersection classification") {
    SUBCASE("two directions need equal weight unless parallel") {
        IntersectionSpec spec{units({0, 60}), Eigen::Vector2d(0.3, 0.7), true};
        IntersectionReport rep = classify_intersection(spec);
        CHECK(!rep.weights_admissible);
        CHECK(!rep.admissible);

        spec.weights = Eigen::Vector2d(0.5, 0.5);
        CHECK(classify_intersection(spec).admissible);

        IntersectionSpec par{{unit(0.2), unit(0.2 + M_PI)}, Eigen::Vector2d(0.3, 0.7), false};
        CHECK(classify_intersection(par).weights_admissible);
    }
    SUBCASE("unsymmetric three-pointed star at 120 degrees") {
        IntersectionSpec spec{units({0, 120, 240}), Eigen::VectorXd(), false};
        IntersectionReport rep = classify_intersection(spec);
        CHECK(rep.admissible);
        CHECK(rep.named_condition_holds);
    }
    SUBCASE("four directions with the pairwise equal-angle pattern") {
        IntersectionSpec spec{units({0, 90, 45, 135}), Eigen::VectorXd(), true};
        IntersectionReport rep = classify_intersection(spec);
        CHECK(rep.admissible);
        CHECK(rep.named_condition == "pairwise-equal-angle");
        CHECK(rep.named_condition_holds);
    }
    SUBCASE("bad weights are rejected") {
        IntersectionSpec spec{units({0, 90}), Eigen::Vector2d(0.5, 0.6), true};
        CHECK_THROWS_AS(classify_intersection(spec), std::invalid_argument);
    }
    SUBCASE("the balance verdict ignores the symmetric flag") {
        for (auto degrees : {std::initializer_list<double>{0, 60, 120},
                             std::initializer_list<double>{0, 45, 90}}) {
            IntersectionSpec sym{units(degrees), Eigen::VectorXd(), true};
            IntersectionSpec asym{units(degrees), Eigen::VectorXd(), false};
            CHECK(classify_intersection(sym).balance.balanced ==
                  classify_intersection(asym).balance.balanced);
        }
    }
}

TEST_CASE("pointwise residual detects unbalanced weights") {
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    const double a1 = 0.0, a2 = M_PI / 3.0;  // |g1.g2| = cos 60 = 1/2
    const double alpha = 0.3;
    DirectionMeasure q = DirectionMeasure::from_atoms({{a1, alpha / 2},
                                                       {a1 + M_PI, alpha / 2},
                                                       {a2, (1 - alpha) / 2},
                                                       {a2 + M_PI, (1 - alpha) / 2}});
    VelocityMeasure p = lift(q, m);
    auto [rq, rp] = residual_pointwise(p, q);
    CHECK(rq > 0.01);
    CHECK(rp <= 1e-13);  // p = q~ pbar is still in the turning kernel
}

TEST_CASE("patchy network validation") {
    // closed circle polyline with exact tangents
    auto circle = [](int n, double radius) {
        NetworkSpec::Curve c;
        c.closed = true;
        c.rho = 1.0;
        for (int i = 0; i < n; ++i) {
            double phi = 2.0 * M_PI * i / n;
            c.vertices.emplace_back(radius * std::cos(phi), radius * std::sin(phi));
            c.tangents.emplace_back(-std::sin(phi), std::cos(phi));
        }
        return c;
    };

    SUBCASE("encapsulation: circle, uniform interior, empty exterior") {
        NetworkSpec net;
        net.curves.push_back(circle(48, 2.0));
        net.patches.push_back({"interior", 0.8, false});
        net.patches.push_back({"exterior", 0.0, true});
        NetworkReport rep = validate_patchy_network(net);
        CHECK(rep.valid);
    }

    SUBCASE("a rotated tangent breaks tangency") {
        NetworkSpec net;
        net.curves.push_back(circle(48, 2.0));
        double phi = 2.0 * M_PI * 7 / 48;
        double rot = M_PI / 6.0;
        net.curves[0].tangents[7] =
            Vec2(-std::sin(phi + rot), std::cos(phi + rot));
        NetworkReport rep = validate_patchy_network(net);
        CHECK(!rep.valid);
        REQUIRE(rep.violations.size() == 1);
        CHECK(rep.violations[0].find("vertex 7") != std::string::npos);
    }

    SUBCASE("nonzero density on an unbounded patch is rejected") {
        NetworkSpec net;
        net.curves.push_back(circle(48, 2.0));
        net.patches.push_back({"exterior", 0.4, true});
        CHECK(!validate_patchy_network(net).valid);
    }

    SUBCASE("three straight arms meeting at 120 degrees are admissible") {
        NetworkSpec net;
        for (int arm = 0; arm < 3; ++arm) {
            double phi = 2.0 * M_PI * arm / 3.0;
            NetworkSpec::Curve c;
            c.rho = 1.0;
            Vec2 dir(std::cos(phi), std::sin(phi));
            for (int i = 0; i <= 4; ++i) {
                c.vertices.emplace_back(i * 0.5 * dir);
                c.tangents.push_back(dir);
            }
            net.curves.push_back(c);
        }
        NetworkReport rep = validate_patchy_network(net);
        CHECK(rep.intersections_checked == 1);
        CHECK(rep.valid);

        // bend one arm to 130 degrees: the meeting becomes unbalanced
        NetworkSpec bent = net;
        double phi = 130.0 * M_PI / 180.0;
        Vec2 dir(std::cos(phi), std::sin(phi));
        for (int i = 0; i <= 4; ++i) {
            bent.curves[1].vertices[i] = i * 0.5 * dir;
            bent.curves[1].tangents[i] = dir;
        }
        CHECK(!validate_patchy_network(bent).valid);
    }

    SUBCASE("malformed polylines are rejected") {
        NetworkSpec net;
        NetworkSpec::Curve c;
        c.vertices.emplace_back(0.0, 0.0);
        c.tangents.emplace_back(1.0, 0.0);
        net.curves.push_back(c);
        CHECK_THROWS_AS(validate_patchy_network(net), std::invalid_argument);
    }
}

TEST_CASE("general mixing ansatz") {
    SpeedMeasure m = SpeedMeasure::dirac(1.0);
    Grid g(8, 8, 0.5, 0.5);
    const int nt = 128;

    SUBCASE("pure uniform mixing: C equals the circle quadrature of 2/pi") {
        AnsatzField field{g, Eigen::ArrayXXd::Zero(g.ny, g.nx), Eigen::ArrayXXd::Zero(g.ny, g.nx),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.0)};
        AnsatzReport rep = check_general_ansatz(field, m, nt);
        CHECK(rep.condition_q_ok);
        CHECK(rep.condition_rho_ok);
        CHECK(std::abs(rep.c_min - 2.0 / M_PI) <= 5e-4);
        CHECK(rep.c_min == doctest::Approx(rep.quadrature_uniform).epsilon(1e-14));
    }

    SUBCASE("pure alignment: C = 1") {
        AnsatzField field{g, Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.0),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.7),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 2.0)};
        AnsatzReport rep = check_general_ansatz(field, m, nt);
        CHECK(rep.condition_q_ok);
        CHECK(rep.condition_rho_ok);
        CHECK(rep.c_min == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(rep.c_max == doctest::Approx(1.0).epsilon(1e-13));
    }

    SUBCASE("mixed state off the direction nodes") {
        AnsatzField field{g, Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.4),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.234),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.0)};
        AnsatzReport rep = check_general_ansatz(field, m, 32);
        CHECK(rep.condition_q_ok);
        CHECK(rep.max_condition_q_residual <= 1e-13);
        CHECK(rep.c_min == doctest::Approx(0.4 + 0.6 * 2.0 / M_PI).epsilon(1e-3));
    }

    SUBCASE("constant fields satisfy the gradient condition exactly") {
        AnsatzField field{g, Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.4),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.2),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.9)};
        AnsatzReport rep = check_general_ansatz(field, m, nt);
        CHECK(rep.condition_rho_ok);
        CHECK(rep.max_tv_gradient == 0.0);
    }

    SUBCASE("a density step is detected") {
        AnsatzField field{g, Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.4),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.2),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 0.9)};
        field.rho(3, 4) = 1.5;
        AnsatzReport rep = check_general_ansatz(field, m, nt);
        CHECK(!rep.condition_rho_ok);
        CHECK(rep.max_tv_gradient > 0.1);
    }

    SUBCASE("f outside [0,1] is rejected") {
        AnsatzField field{g, Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.2),
                          Eigen::ArrayXXd::Zero(g.ny, g.nx),
                          Eigen::ArrayXXd::Constant(g.ny, g.nx, 1.0)};
        CHECK_THROWS_AS(check_general_ansatz(field, m, nt), std::invalid_argument);
    }
}
