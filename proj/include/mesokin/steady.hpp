#ifndef MESOKIN_STEADY_HPP
#define MESOKIN_STEADY_HPP

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mesokin/fields.hpp"
#include "mesokin/measure.hpp"

namespace mesokin {

/// Default tolerance on the row-sum spread of the projection matrix.
constexpr double kBalanceTol = 1e-10;

struct SteadyPair {
    VelocityMeasure p;
    DirectionMeasure q;
};

/// Uniform fibre distribution with cells at density rho:
/// q uniform over n_theta bins, p = rho * q~.
SteadyPair construct_homogeneous(double rho, const SpeedMeasure& m, int n_theta);

/// Tissue strictly aligned along gamma: q = (delta_gamma + delta_{-gamma})/2,
/// p = rho * q~.  Non-unit gamma is normalized (reported through the flag).
SteadyPair construct_aligned(const Vec2& gamma, double rho, const SpeedMeasure& m,
                             bool* normalized_warning = nullptr);

/// Matrix of pairwise absolute projections |gamma_i . gamma_j|.
/// Directions must be distinct (duplicates within the merge tolerance are
/// rejected); antiparallel pairs are allowed.
Eigen::MatrixXd build_projection_matrix(const std::vector<Vec2>& directions);

struct BalanceVerdict {
    bool balanced = false;
    Eigen::VectorXd row_sums;
    double spread = 0.0;  // max row sum - min row sum
};

/// An equal-weight intersection can be stationary pointwise only when
/// (1,...,1)^T is an eigenvector of the projection matrix, equivalently when
/// all row sums agree.
BalanceVerdict is_balanced_intersection(const Eigen::MatrixXd& gamma_matrix,
                                        double tol = kBalanceTol);

struct IntersectionSpec {
    std::vector<Vec2> directions;
    Eigen::VectorXd weights;  // empty means equal weights
    bool symmetric = true;    // each direction stands for the pair {gamma, -gamma}
};

struct IntersectionReport {
    bool admissible = false;
    bool weights_admissible = false;
    BalanceVerdict balance;
    // N=3: equal-angle condition; N=4: the three pairwise projection
    // equalities, reported separately from the row-sum test
    bool named_condition_applies = false;
    bool named_condition_holds = false;
    std::string named_condition;
    std::string text;
    std::vector<std::pair<std::string, std::string>> records;  // machine-readable
};

IntersectionReport classify_intersection(const IntersectionSpec& spec, double tol = kBalanceTol);

/// Stationarity residuals of a candidate pair against the truncated
/// trigonometric test basis {1, cos k theta, sin k theta : k <= basis_size}.
///
/// r_q: largest pairing of (lambda - B) against the basis along q.
/// r_p: largest basis pairing of mu*(pbar q~ - p) with the basis lifted to V
///      speed-independently (the lifting measure then drops out).
/// Both vanish at pointwise steady states.
std::pair<double, double> residual_pointwise(const VelocityMeasure& p, const DirectionMeasure& q,
                                             int basis_size = 16, double mu = 1.0);

struct NetworkSpec {
    struct Curve {
        std::vector<Vec2> vertices;
        std::vector<Vec2> tangents;  // unit tangent per vertex
        double rho = 0.0;            // cell density along the curve
        bool closed = false;
    };
    struct Patch {
        std::string label;
        double density = 0.0;
        bool unbounded = false;
    };
    std::vector<Curve> curves;
    std::vector<Patch> patches;
};

struct NetworkReport {
    bool valid = false;
    std::vector<std::string> violations;
    int intersections_checked = 0;
    std::string text;
};

/// Checks a patchy-network candidate: tangency of the aligned states along
/// each curve (the outward normal must annihilate the cell support), zero
/// density on unbounded patches, and the projection-matrix balance at every
/// point where curves meet.
NetworkReport validate_patchy_network(const NetworkSpec& net, double tol = 1e-6);

/// Mixed ansatz q(x) = f(x) delta_{|gamma(x)|} + (1 - f(x)) * uniform.
struct AnsatzField {
    Grid grid;
    Eigen::ArrayXXd f;            // mixing weight in [0,1]
    Eigen::ArrayXXd gamma_angle;  // predominant direction per cell
    Eigen::ArrayXXd rho;          // cell density, >= 0
};

struct AnsatzReport {
    double c_min = 0.0, c_max = 0.0;        // alignment constant f + (1-f) I_unif
    double quadrature_uniform = 0.0;        // circle quadrature of the uniform part
    double max_condition_q_residual = 0.0;  // |lambda(gamma) - C| over cells
    double max_tv_gradient = 0.0;           // TV gradient of rho * q~ where rho != 0
    bool condition_q_ok = false;
    bool condition_rho_ok = false;
    std::string text;
};

AnsatzReport check_general_ansatz(const AnsatzField& field, const SpeedMeasure& m, int n_theta,
                                  double tol = 1e-9);

}  // namespace mesokin

#endif
