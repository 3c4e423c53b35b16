#ifndef MESOKIN_IO_HPP
#define MESOKIN_IO_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mesokin/diffusion.hpp"
#include "mesokin/solver.hpp"
#include "mesokin/steady.hpp"

namespace mesokin {

inline constexpr const char* kArtifactVersion = "0.1.0";

// exit statuses of the command-line front end
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitInadmissible = 3;

struct InitialSpec {
    std::string cells = "uniform_noise";  // uniform_noise | gaussian_bump | aligned | point_mass
    double amplitude = 0.01;
    std::optional<std::uint64_t> seed;
    double center_x = 0.0, center_y = 0.0;  // gaussian_bump
    double width = 1.5;
    int direction_bin = -1;  // gaussian_bump: -1 = isotropic
    double gamma_angle = 0.0;
    int cell_ix = 0, cell_iy = 0;  // point_mass

    std::string fibres = "uniform";  // uniform | aligned | uniform_noise
    double fibre_gamma = 0.0;
    double fibre_amplitude = 0.0;
    std::optional<std::uint64_t> fibre_seed;
};

struct OutputSpec {
    std::string directory = "out";
    int snapshot_every = 10;  // steps; 0 = first/last only
    bool csv = true;
    bool binary = false;
    bool dump_state = false;
};

struct RunConfig {
    Grid grid{64, 64, 0.25, 0.25};
    SimParams params;
    double t_end = 50.0;
    int n_theta = 32;
    InitialSpec initial;
    OutputSpec output;

    // `exact` subcommand
    std::vector<double> exact_times{1.0};
    int quad_steps = 128;
    std::string exact_method = "constant";  // constant | general

    // `limit-study` subcommand
    std::vector<double> eps_list{0.5, 0.25, 0.125};
    double dt_coeff = 2.0;
};

/// Parse the flat key = value configuration format.  Unknown sections or
/// keys and malformed values are rejected with a line-referenced ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Inverse of parse_config; doubles are written with 17 significant digits
/// so a serialize -> parse round trip reproduces every value exactly.
std::string serialize_config(const RunConfig& config);

std::uint64_t fnv1a64(const std::string& data);

// --- initial data ---

CellField build_initial_cells(const RunConfig& config);
FibreField build_initial_fibres(const RunConfig& config);

// --- snapshots and metrics ---

struct SnapshotRecord {
    double time = 0.0;
    Eigen::ArrayXXd pbar;      // cell mass density
    Eigen::ArrayXXd order;     // largest eigenvalue of V(q) - 1/2
    Eigen::ArrayXXd mean_dir;  // principal direction of V(q), in [0, pi)
};

SnapshotRecord make_snapshot(const SimState& state);

void write_snapshot_csv(const std::string& path, const Grid& grid, const SnapshotRecord& snap);
SnapshotRecord read_snapshot_csv(const std::string& path, const Grid& grid);

/// Flat little-endian float64 dump of the full (k,j) state with a sidecar
/// text header describing dimensions and layout.
void write_state_binary(const std::string& path_base, const SimState& state);
SimState read_state_binary(const std::string& path_base);

struct MetricsRow {
    double time;
    double total_mass;
    double q_norm_min, q_norm_max;
    double p_min;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

void write_manifest(const std::string& path, const RunConfig& config, const std::string& command);

void write_plot_script(const std::string& path, const std::string& snapshot_csv,
                       const Grid& grid);

// --- steady-state spec files ---

struct SteadySpecFile {
    std::optional<IntersectionSpec> intersection;
    std::optional<NetworkSpec> network;
};

SteadySpecFile parse_steady_spec(const std::string& text);
SteadySpecFile load_steady_spec(const std::string& path);

// --- subcommand drivers (return process exit status) ---

int cmd_run(const RunConfig& config, std::ostream& log, bool quiet);
int cmd_exact(const RunConfig& config, std::ostream& log, bool quiet);
int cmd_steady_check(const std::string& spec_path, const std::string& out_dir, std::ostream& log,
                     bool quiet);
int cmd_limit_study(const RunConfig& config, std::ostream& log, bool quiet);

}  // namespace mesokin

#endif
