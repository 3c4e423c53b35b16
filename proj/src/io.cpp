#include "mesokin/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "mesokin/characteristics.hpp"

namespace fs = std::filesystem;

namespace mesokin {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail_line(int line, const std::string& what) {
    throw ConfigError("line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) fail_line(line, "trailing characters in number '" + v + "'");
        return d;
    } catch (const std::logic_error&) {
        fail_line(line, "expected a number, got '" + v + "'");
    }
}

int parse_int(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        int i = std::stoi(v, &pos);
        if (pos != v.size()) fail_line(line, "trailing characters in integer '" + v + "'");
        return i;
    } catch (const std::logic_error&) {
        fail_line(line, "expected an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        std::uint64_t u = std::stoull(v, &pos);
        if (pos != v.size()) fail_line(line, "trailing characters in integer '" + v + "'");
        return u;
    } catch (const std::logic_error&) {
        fail_line(line, "expected an unsigned integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail_line(line, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

std::vector<double> parse_double_list(const std::string& v, int line) {
    std::vector<double> out;
    for (const std::string& item : split(v, ',')) {
        if (item.empty()) fail_line(line, "empty entry in list");
        out.push_back(parse_double(item, line));
    }
    if (out.empty()) fail_line(line, "empty list");
    return out;
}

SpeedMeasure parse_speed_nodes(const std::string& v, int line) {
    std::vector<SpeedNode> nodes;
    for (const std::string& item : split(v, ',')) {
        auto parts = split(item, ':');
        if (parts.size() != 2) fail_line(line, "speed node must be speed:weight, got '" + item + "'");
        nodes.push_back({parse_double(parts[0], line), parse_double(parts[1], line)});
    }
    try {
        return SpeedMeasure::from_nodes(std::move(nodes));
    } catch (const std::invalid_argument& e) {
        fail_line(line, e.what());
    }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    // raw grid values so validation happens once, with a useful message
    int nx = config.grid.nx, ny = config.grid.ny;
    double dx = config.grid.dx, dy = config.grid.dy;
    int grid_line = 0;

    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        std::size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail_line(line, "malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            static const char* known[] = {"grid",    "params", "speeds", "directions",
                                          "initial", "output", "exact",  "limit"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                fail_line(line, "unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail_line(line, "expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) fail_line(line, "empty key");
        if (value.empty()) fail_line(line, "empty value for '" + key + "'");

        if (section == "grid") {
            grid_line = line;
            if (key == "nx") nx = parse_int(value, line);
            else if (key == "ny") ny = parse_int(value, line);
            else if (key == "dx") dx = parse_double(value, line);
            else if (key == "dy") dy = parse_double(value, line);
            else fail_line(line, "unknown key '" + key + "' in [grid]");
        } else if (section == "params") {
            if (key == "mu") config.params.mu = parse_double(value, line);
            else if (key == "kappa") config.params.kappa = parse_double(value, line);
            else if (key == "epsilon") config.params.epsilon = parse_double(value, line);
            else if (key == "dt") config.params.dt = parse_double(value, line);
            else if (key == "t_end") config.t_end = parse_double(value, line);
            else if (key == "splitting") {
                if (value == "lie") config.params.splitting = Splitting::Lie;
                else if (value == "strang") config.params.splitting = Splitting::Strang;
                else fail_line(line, "splitting must be lie or strang");
            } else fail_line(line, "unknown key '" + key + "' in [params]");
        } else if (section == "speeds") {
            if (key == "nodes") config.params.speeds = parse_speed_nodes(value, line);
            else fail_line(line, "unknown key '" + key + "' in [speeds]");
        } else if (section == "directions") {
            if (key == "n_theta") config.n_theta = parse_int(value, line);
            else fail_line(line, "unknown key '" + key + "' in [directions]");
        } else if (section == "initial") {
            if (key == "cells") config.initial.cells = value;
            else if (key == "amplitude") config.initial.amplitude = parse_double(value, line);
            else if (key == "seed") config.initial.seed = parse_u64(value, line);
            else if (key == "center_x") config.initial.center_x = parse_double(value, line);
            else if (key == "center_y") config.initial.center_y = parse_double(value, line);
            else if (key == "width") config.initial.width = parse_double(value, line);
            else if (key == "direction_bin") config.initial.direction_bin = parse_int(value, line);
            else if (key == "gamma_angle") config.initial.gamma_angle = parse_double(value, line);
            else if (key == "cell_ix") config.initial.cell_ix = parse_int(value, line);
            else if (key == "cell_iy") config.initial.cell_iy = parse_int(value, line);
            else if (key == "fibres") config.initial.fibres = value;
            else if (key == "fibre_gamma") config.initial.fibre_gamma = parse_double(value, line);
            else if (key == "fibre_amplitude")
                config.initial.fibre_amplitude = parse_double(value, line);
            else if (key == "fibre_seed") config.initial.fibre_seed = parse_u64(value, line);
            else fail_line(line, "unknown key '" + key + "' in [initial]");
        } else if (section == "output") {
            if (key == "directory") config.output.directory = value;
            else if (key == "snapshot_every") config.output.snapshot_every = parse_int(value, line);
            else if (key == "dump_state") config.output.dump_state = parse_bool(value, line);
            else if (key == "formats") {
                config.output.csv = false;
                config.output.binary = false;
                for (const std::string& f : split(value, ',')) {
                    if (f == "csv") config.output.csv = true;
                    else if (f == "binary") config.output.binary = true;
                    else fail_line(line, "unknown format '" + f + "'");
                }
            } else fail_line(line, "unknown key '" + key + "' in [output]");
        } else if (section == "exact") {
            if (key == "times") config.exact_times = parse_double_list(value, line);
            else if (key == "quad") config.quad_steps = parse_int(value, line);
            else if (key == "method") {
                if (value != "constant" && value != "general")
                    fail_line(line, "method must be constant or general");
                config.exact_method = value;
            } else fail_line(line, "unknown key '" + key + "' in [exact]");
        } else if (section == "limit") {
            if (key == "eps") config.eps_list = parse_double_list(value, line);
            else if (key == "dt_coeff") config.dt_coeff = parse_double(value, line);
            else fail_line(line, "unknown key '" + key + "' in [limit]");
        } else {
            fail_line(line, "key outside any section");
        }
    }

    try {
        config.grid = Grid(nx, ny, dx, dy);
    } catch (const std::invalid_argument& e) {
        fail_line(grid_line == 0 ? 1 : grid_line, e.what());
    }
    if (config.n_theta < 1) throw ConfigError("directions: n_theta must be positive");
    if (!(config.t_end > 0.0)) throw ConfigError("params: t_end must be positive");
    if (!(config.params.dt > 0.0)) throw ConfigError("params: dt must be positive");

    static const char* cell_presets[] = {"uniform_noise", "gaussian_bump", "aligned", "point_mass"};
    if (std::find(std::begin(cell_presets), std::end(cell_presets), config.initial.cells) ==
        std::end(cell_presets))
        throw ConfigError("initial: unknown cells preset '" + config.initial.cells + "'");
    static const char* fibre_presets[] = {"uniform", "aligned", "directed", "uniform_noise"};
    if (std::find(std::begin(fibre_presets), std::end(fibre_presets), config.initial.fibres) ==
        std::end(fibre_presets))
        throw ConfigError("initial: unknown fibres preset '" + config.initial.fibres + "'");
    if (config.initial.cells == "uniform_noise" && !config.initial.seed)
        throw ConfigError("initial: uniform_noise requires an explicit seed");
    if (config.initial.fibres == "uniform_noise" && !config.initial.fibre_seed &&
        !config.initial.seed)
        throw ConfigError("initial: fibre uniform_noise requires a seed");
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "[grid]\n";
    os << "nx = " << c.grid.nx << "\nny = " << c.grid.ny << "\n";
    os << "dx = " << fmt17(c.grid.dx) << "\ndy = " << fmt17(c.grid.dy) << "\n\n";
    os << "[params]\n";
    os << "mu = " << fmt17(c.params.mu) << "\nkappa = " << fmt17(c.params.kappa) << "\n";
    os << "epsilon = " << fmt17(c.params.epsilon) << "\ndt = " << fmt17(c.params.dt) << "\n";
    os << "t_end = " << fmt17(c.t_end) << "\n";
    os << "splitting = " << (c.params.splitting == Splitting::Lie ? "lie" : "strang") << "\n\n";
    os << "[speeds]\nnodes = ";
    for (int k = 0; k < c.params.speeds.size(); ++k) {
        if (k) os << ", ";
        os << fmt17(c.params.speeds.nodes()[k].speed) << ":"
           << fmt17(c.params.speeds.nodes()[k].weight);
    }
    os << "\n\n[directions]\nn_theta = " << c.n_theta << "\n\n";
    os << "[initial]\ncells = " << c.initial.cells << "\n";
    os << "amplitude = " << fmt17(c.initial.amplitude) << "\n";
    if (c.initial.seed) os << "seed = " << *c.initial.seed << "\n";
    os << "center_x = " << fmt17(c.initial.center_x) << "\ncenter_y = " << fmt17(c.initial.center_y)
       << "\n";
    os << "width = " << fmt17(c.initial.width) << "\n";
    os << "direction_bin = " << c.initial.direction_bin << "\n";
    os << "gamma_angle = " << fmt17(c.initial.gamma_angle) << "\n";
    os << "cell_ix = " << c.initial.cell_ix << "\ncell_iy = " << c.initial.cell_iy << "\n";
    os << "fibres = " << c.initial.fibres << "\n";
    os << "fibre_gamma = " << fmt17(c.initial.fibre_gamma) << "\n";
    os << "fibre_amplitude = " << fmt17(c.initial.fibre_amplitude) << "\n";
    if (c.initial.fibre_seed) os << "fibre_seed = " << *c.initial.fibre_seed << "\n";
    os << "\n[output]\ndirectory = " << c.output.directory << "\n";
    os << "snapshot_every = " << c.output.snapshot_every << "\n";
    os << "formats = ";
    if (c.output.csv) os << "csv";
    if (c.output.csv && c.output.binary) os << ", ";
    if (c.output.binary) os << "binary";
    os << "\ndump_state = " << (c.output.dump_state ? "true" : "false") << "\n\n";
    os << "[exact]\ntimes = ";
    for (std::size_t i = 0; i < c.exact_times.size(); ++i)
        os << (i ? ", " : "") << fmt17(c.exact_times[i]);
    os << "\nquad = " << c.quad_steps << "\nmethod = " << c.exact_method << "\n\n";
    os << "[limit]\neps = ";
    for (std::size_t i = 0; i < c.eps_list.size(); ++i) os << (i ? ", " : "") << fmt17(c.eps_list[i]);
    os << "\ndt_coeff = " << fmt17(c.dt_coeff) << "\n";
    return os.str();
}

std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// --- initial data ---

namespace {

// periodic Gaussian: wrap nearest images so the bump lives on the torus
double periodic_gaussian(const Grid& g, double x, double y, double cx, double cy, double w) {
    double acc = 0.0;
    for (int ox = -1; ox <= 1; ++ox)
        for (int oy = -1; oy <= 1; ++oy) {
            double ddx = x - cx + ox * g.width();
            double ddy = y - cy + oy * g.height();
            acc += std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * w * w));
        }
    return acc;
}

}  // namespace

CellField build_initial_cells(const RunConfig& config) {
    const Grid& g = config.grid;
    const SpeedMeasure& m = config.params.speeds;
    const int nt = config.n_theta;
    CellField p(g, m, nt);
    const InitialSpec& ic = config.initial;

    Eigen::ArrayXXd rho(g.ny, g.nx);
    if (ic.cells == "uniform_noise") {
        std::mt19937_64 rng(*ic.seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) rho(iy, ix) = 1.0 + ic.amplitude * u(rng);
    } else if (ic.cells == "gaussian_bump") {
        if (!(ic.width > 0.0)) throw ConfigError("initial: width must be positive");
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix)
                rho(iy, ix) = periodic_gaussian(g, g.x_center(ix), g.y_center(iy), ic.center_x,
                                                ic.center_y, ic.width);
    } else if (ic.cells == "aligned") {
        rho.setOnes();
    } else {  // point_mass
        if (ic.cell_ix < 0 || ic.cell_ix >= g.nx || ic.cell_iy < 0 || ic.cell_iy >= g.ny)
            throw ConfigError("initial: point_mass cell outside the grid");
        rho.setZero();
        rho(ic.cell_iy, ic.cell_ix) = 1.0 / (g.dx * g.dy);
    }

    if (ic.cells == "aligned") {
        const int j_fwd = DirectionMeasure::bin_index(ic.gamma_angle, nt);
        const int j_bwd = DirectionMeasure::bin_index(ic.gamma_angle + M_PI, nt);
        for (int k = 0; k < m.size(); ++k) {
            const double mk = m.nodes()[k].weight;
            p.slice(k, j_fwd) = 0.5 * mk * rho;
            p.slice(k, j_bwd) += 0.5 * mk * rho;
        }
    } else if (ic.cells == "gaussian_bump" && ic.direction_bin >= 0) {
        if (ic.direction_bin >= nt) throw ConfigError("initial: direction_bin out of range");
        for (int k = 0; k < m.size(); ++k)
            p.slice(k, ic.direction_bin) = m.nodes()[k].weight * rho;
    } else {
        for (int k = 0; k < m.size(); ++k)
            for (int j = 0; j < nt; ++j) p.slice(k, j) = (m.nodes()[k].weight / nt) * rho;
    }
    return p;
}

FibreField build_initial_fibres(const RunConfig& config) {
    const Grid& g = config.grid;
    const int nt = config.n_theta;
    const InitialSpec& ic = config.initial;
    if (ic.fibres == "uniform") return FibreField::uniform(g, nt);
    if (ic.fibres == "aligned")
        return FibreField::constant(g, nt, DirectionMeasure::aligned(ic.fibre_gamma));
    if (ic.fibres == "directed")
        return FibreField::constant(g, nt, DirectionMeasure::from_atoms({{ic.fibre_gamma, 1.0}}));
    // uniform_noise
    const double amp = ic.fibre_amplitude > 0.0 ? ic.fibre_amplitude : ic.amplitude;
    std::mt19937_64 rng(ic.fibre_seed ? *ic.fibre_seed : *ic.seed + 1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FibreField q(g, nt);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix)
            for (int j = 0; j < nt; ++j) q.bin(j)(iy, ix) = (1.0 + amp * u(rng)) / nt;
    q.normalize();
    return q;
}

// --- snapshots ---

SnapshotRecord make_snapshot(const SimState& state) {
    const Grid& g = state.q.grid();
    const int nt = state.q.n_theta();
    SnapshotRecord snap;
    snap.time = state.time;
    snap.pbar = state.p.mass_density();
    snap.order.resize(g.ny, g.nx);
    snap.mean_dir.resize(g.ny, g.nx);

    // V(q) entries per cell: a = sum q cos^2, c = sum q sin^2, b = sum q cs
    Eigen::ArrayXXd a = Eigen::ArrayXXd::Zero(g.ny, g.nx);
    Eigen::ArrayXXd b = a, c = a;
    for (int j = 0; j < nt; ++j) {
        const double theta = DirectionMeasure::bin_center(j, nt);
        const double ct = std::cos(theta), st = std::sin(theta);
        a += ct * ct * state.q.bin(j);
        b += ct * st * state.q.bin(j);
        c += st * st * state.q.bin(j);
    }
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const double half_diff = 0.5 * (a(iy, ix) - c(iy, ix));
            const double off = b(iy, ix);
            snap.order(iy, ix) = std::sqrt(half_diff * half_diff + off * off);
            double dir = 0.5 * std::atan2(2.0 * off, a(iy, ix) - c(iy, ix));
            if (dir < 0.0) dir += M_PI;
            snap.mean_dir(iy, ix) = dir;
        }
    }
    return snap;
}

void write_snapshot_csv(const std::string& path, const Grid& grid, const SnapshotRecord& snap) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "x,y,pbar,order,mean_dir\n";
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix)
            out << fmt17(grid.x_center(ix)) << ',' << fmt17(grid.y_center(iy)) << ','
                << fmt17(snap.pbar(iy, ix)) << ',' << fmt17(snap.order(iy, ix)) << ','
                << fmt17(snap.mean_dir(iy, ix)) << '\n';
}

SnapshotRecord read_snapshot_csv(const std::string& path, const Grid& grid) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::string header;
    std::getline(in, header);
    SnapshotRecord snap;
    snap.pbar.resize(grid.ny, grid.nx);
    snap.order.resize(grid.ny, grid.nx);
    snap.mean_dir.resize(grid.ny, grid.nx);
    std::string line;
    for (int iy = 0; iy < grid.ny; ++iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            if (!std::getline(in, line))
                throw ConfigError("snapshot '" + path + "': truncated at row " +
                                  std::to_string(iy * grid.nx + ix));
            auto cols = split(line, ',');
            if (cols.size() != 5) throw ConfigError("snapshot '" + path + "': expected 5 columns");
            snap.pbar(iy, ix) = std::stod(cols[2]);
            snap.order(iy, ix) = std::stod(cols[3]);
            snap.mean_dir(iy, ix) = std::stod(cols[4]);
        }
    }
    return snap;
}

namespace {

void write_doubles(std::ofstream& out, const Eigen::ArrayXXd& a) {
    // row-major (iy outer, ix inner), little-endian float64
    for (int iy = 0; iy < a.rows(); ++iy) {
        for (int ix = 0; ix < a.cols(); ++ix) {
            double v = a(iy, ix);
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    }
}

void read_doubles(std::ifstream& in, Eigen::ArrayXXd& a) {
    for (int iy = 0; iy < a.rows(); ++iy) {
        for (int ix = 0; ix < a.cols(); ++ix) {
            std::uint64_t bits;
            in.read(reinterpret_cast<char*>(&bits), sizeof bits);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            double v;
            std::memcpy(&v, &bits, sizeof v);
            a(iy, ix) = v;
        }
    }
    if (!in) throw ConfigError("binary state: truncated data");
}

}  // namespace

void write_state_binary(const std::string& path_base, const SimState& state) {
    const Grid& g = state.p.grid();
    std::ofstream hdr(path_base + ".hdr");
    if (!hdr) throw ConfigError("cannot write '" + path_base + ".hdr'");
    hdr << "mesokin state dump " << kArtifactVersion << "\n";
    hdr << "encoding = float64 little-endian\n";
    hdr << "layout = arrays of ny*nx doubles, iy outer, ix inner\n";
    hdr << "arrays = p slices (k outer, j inner), then q bins (j)\n";
    hdr << "time = " << fmt17(state.time) << "\n";
    hdr << "nx = " << g.nx << "\nny = " << g.ny << "\n";
    hdr << "dx = " << fmt17(g.dx) << "\ndy = " << fmt17(g.dy) << "\n";
    hdr << "n_theta = " << state.p.n_theta() << "\n";
    hdr << "speeds = ";
    for (int k = 0; k < state.p.speeds().size(); ++k) {
        if (k) hdr << ", ";
        hdr << fmt17(state.p.speeds().nodes()[k].speed) << ":"
            << fmt17(state.p.speeds().nodes()[k].weight);
    }
    hdr << "\n";

    std::ofstream bin(path_base + ".bin", std::ios::binary);
    if (!bin) throw ConfigError("cannot write '" + path_base + ".bin'");
    for (int k = 0; k < state.p.speeds().size(); ++k)
        for (int j = 0; j < state.p.n_theta(); ++j) write_doubles(bin, state.p.slice(k, j));
    for (int j = 0; j < state.q.n_theta(); ++j) write_doubles(bin, state.q.bin(j));
}

SimState read_state_binary(const std::string& path_base) {
    std::ifstream hdr(path_base + ".hdr");
    if (!hdr) throw ConfigError("cannot open '" + path_base + ".hdr'");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(hdr, line)) {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"nx", "ny", "dx", "dy", "n_theta", "speeds", "time"})
        if (!kv.count(key)) throw ConfigError("binary state header: missing '" + std::string(key) + "'");

    Grid g(parse_int(kv["nx"], 0), parse_int(kv["ny"], 0), parse_double(kv["dx"], 0),
           parse_double(kv["dy"], 0));
    const int nt = parse_int(kv["n_theta"], 0);
    SpeedMeasure m = parse_speed_nodes(kv["speeds"], 0);

    SimState state{CellField(g, m, nt), FibreField(g, nt), parse_double(kv["time"], 0)};
    std::ifstream bin(path_base + ".bin", std::ios::binary);
    if (!bin) throw ConfigError("cannot open '" + path_base + ".bin'");
    for (int k = 0; k < m.size(); ++k)
        for (int j = 0; j < nt; ++j) read_doubles(bin, state.p.slice(k, j));
    for (int j = 0; j < nt; ++j) read_doubles(bin, state.q.bin(j));
    return state;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "time,total_mass,q_norm_min,q_norm_max,p_min\n";
    for (const MetricsRow& r : rows)
        out << fmt17(r.time) << ',' << fmt17(r.total_mass) << ',' << fmt17(r.q_norm_min) << ','
            << fmt17(r.q_norm_max) << ',' << fmt17(r.p_min) << '\n';
}

void write_manifest(const std::string& path, const RunConfig& config, const std::string& command) {
    const std::string serialized = serialize_config(config);
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(serialized)));
    out << "artifact = mesokin " << kArtifactVersion << "\n";
    out << "command = " << command << "\n";
    out << "config_fnv1a64 = " << hash << "\n";
    out << "tolerance.atom_merge = " << fmt17(kAtomMergeTol) << "\n";
    out << "tolerance.normalization = " << fmt17(kNormTol) << "\n";
    out << "tolerance.balance = " << fmt17(kBalanceTol) << "\n";
    out << "tolerance.kernel_guard = " << fmt17(kKernelGuard) << "\n";
    if (config.initial.cells == "uniform_noise" || config.initial.fibres == "uniform_noise") {
        out << "note = noise preset is exploratory; network-formation check uses a 3x growth "
               "threshold on the mean alignment order parameter\n";
    }
    out << "--- config ---\n" << serialized;
}

void write_plot_script(const std::string& path, const std::string& snapshot_csv,
                       const Grid& grid) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << "# gnuplot script: cell density and alignment fields\n";
    out << "set datafile separator ','\n";
    out << "set size ratio -1\n";
    out << "set xrange [" << fmt17(-0.5 * grid.width()) << ":" << fmt17(0.5 * grid.width())
        << "]\n";
    out << "set yrange [" << fmt17(-0.5 * grid.height()) << ":" << fmt17(0.5 * grid.height())
        << "]\n";
    out << "set terminal pngcairo size 900,800\n";
    out << "set output 'pbar.png'\n";
    out << "set title 'cell mass density'\n";
    out << "plot '" << snapshot_csv << "' skip 1 using 1:2:3 with image notitle\n";
    out << "set output 'alignment.png'\n";
    out << "set title 'alignment order parameter'\n";
    out << "plot '" << snapshot_csv << "' skip 1 using 1:2:4 with image notitle\n";
}

// --- steady spec files ---

SteadySpecFile parse_steady_spec(const std::string& text) {
    std::istringstream in(text);
    std::string raw, section;
    int line = 0;
    std::string kind;
    IntersectionSpec inter;
    std::vector<double> weights;
    NetworkSpec net;
    NetworkSpec::Curve* curve = nullptr;
    NetworkSpec::Patch* patch = nullptr;

    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        std::size_t hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail_line(line, "malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section == "curve") {
                net.curves.emplace_back();
                curve = &net.curves.back();
                patch = nullptr;
            } else if (section == "patch") {
                net.patches.emplace_back();
                patch = &net.patches.back();
                curve = nullptr;
            } else {
                fail_line(line, "unknown section [" + section + "]");
            }
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) fail_line(line, "expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));

        if (section.empty()) {
            if (key == "kind") {
                if (value != "intersection" && value != "network")
                    fail_line(line, "kind must be intersection or network");
                kind = value;
            } else if (key == "symmetric") {
                inter.symmetric = parse_bool(value, line);
            } else if (key == "angles_deg" || key == "angles_rad") {
                for (double a : parse_double_list(value, line)) {
                    double rad = key == "angles_deg" ? a * M_PI / 180.0 : a;
                    inter.directions.emplace_back(std::cos(rad), std::sin(rad));
                }
            } else if (key == "weights") {
                weights = parse_double_list(value, line);
            } else {
                fail_line(line, "unknown key '" + key + "'");
            }
        } else if (section == "curve") {
            if (key == "rho") curve->rho = parse_double(value, line);
            else if (key == "closed") curve->closed = parse_bool(value, line);
            else if (key == "vertex") {
                auto cols = split(value, ' ');
                cols.erase(std::remove(cols.begin(), cols.end(), std::string()), cols.end());
                if (cols.size() != 4) fail_line(line, "vertex needs 'x y tx ty'");
                curve->vertices.emplace_back(parse_double(cols[0], line), parse_double(cols[1], line));
                curve->tangents.emplace_back(parse_double(cols[2], line), parse_double(cols[3], line));
            } else fail_line(line, "unknown key '" + key + "' in [curve]");
        } else {  // patch
            if (key == "label") patch->label = value;
            else if (key == "density") patch->density = parse_double(value, line);
            else if (key == "unbounded") patch->unbounded = parse_bool(value, line);
            else fail_line(line, "unknown key '" + key + "' in [patch]");
        }
    }

    SteadySpecFile file;
    if (kind == "intersection") {
        if (inter.directions.size() < 2)
            throw ConfigError("intersection spec: need at least 2 directions");
        if (!weights.empty()) {
            inter.weights.resize(static_cast<Eigen::Index>(weights.size()));
            for (std::size_t i = 0; i < weights.size(); ++i) inter.weights(i) = weights[i];
        }
        file.intersection = inter;
    } else if (kind == "network") {
        if (net.curves.empty()) throw ConfigError("network spec: no curves");
        file.network = net;
    } else {
        throw ConfigError("steady spec: missing 'kind = intersection|network'");
    }
    return file;
}

SteadySpecFile load_steady_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open spec file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_steady_spec(ss.str());
}

// --- subcommand drivers ---

namespace {

MetricsRow metrics_of(const SimState& state) {
    Eigen::ArrayXXd qmass = state.q.cell_mass();
    return {state.time, state.p.total_mass(), qmass.minCoeff(), qmass.maxCoeff(),
            state.p.min_value()};
}

std::string snap_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "snapshot_%05d.csv", index);
    return buf;
}

}  // namespace

int cmd_run(const RunConfig& config, std::ostream& log, bool quiet) {
    try {
        fs::create_directories(config.output.directory);
        const fs::path dir(config.output.directory);
        write_manifest((dir / "manifest.txt").string(), config, "run");

        SimState state{build_initial_cells(config), build_initial_fibres(config), 0.0};
        config.params.validate(config.grid);

        std::vector<MetricsRow> metrics;
        int snap_count = 0;
        SimState last_good = state;
        std::string last_csv;
        RunCallbacks callbacks;
        callbacks.snapshot_every = config.output.snapshot_every;
        callbacks.on_snapshot = [&](const SimState& s, int step_index) {
            SnapshotRecord snap = make_snapshot(s);
            if (config.output.csv) {
                last_csv = (dir / snap_name(snap_count)).string();
                write_snapshot_csv(last_csv, config.grid, snap);
            }
            if (config.output.binary || config.output.dump_state) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "state_%05d", snap_count);
                write_state_binary((dir / buf).string(), s);
            }
            metrics.push_back(metrics_of(s));
            last_good = s;
            if (!quiet)
                log << "t = " << s.time << " (step " << step_index
                    << "): mass = " << fmt17(metrics.back().total_mass) << "\n";
            ++snap_count;
        };

        try {
            run(state, config.params, config.t_end, callbacks);
        } catch (const NumericalError& e) {
            log << "error: " << e.what() << "\n";
            write_snapshot_csv((dir / "snapshot_lastgood.csv").string(), config.grid,
                               make_snapshot(last_good));
            write_metrics_csv((dir / "metrics.csv").string(), metrics);
            return kExitNumerical;
        }

        write_metrics_csv((dir / "metrics.csv").string(), metrics);
        if (!last_csv.empty())
            write_plot_script((dir / "plot.gp").string(),
                              fs::path(last_csv).filename().string(), config.grid);
        if (!quiet) log << "run finished: " << snap_count << " snapshots in " << dir.string() << "\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

int cmd_exact(const RunConfig& config, std::ostream& log, bool quiet) {
    try {
        fs::create_directories(config.output.directory);
        const fs::path dir(config.output.directory);
        write_manifest((dir / "manifest.txt").string(), config, "exact");

        DirectionMeasure q;
        if (config.initial.fibres == "uniform") {
            q = DirectionMeasure::uniform(config.n_theta);
        } else if (config.initial.fibres == "aligned") {
            q = DirectionMeasure::aligned(config.initial.fibre_gamma);
        } else if (config.initial.fibres == "directed") {
            q = DirectionMeasure::from_atoms({{config.initial.fibre_gamma, 1.0}});
        } else {
            throw ConfigError("exact: fibre preset must be constant (uniform, aligned, directed)");
        }

        CellField p0_field = build_initial_cells(config);
        VelocityDatum p0 = VelocityDatum::from_cell_field(p0_field);
        PrescribedFibreField field = PrescribedFibreField::constant(q);

        const Grid& g = config.grid;
        std::string last_csv;
        for (double t : config.exact_times) {
            if (!(t >= 0.0)) throw ConfigError("exact: times must be nonnegative");
            SnapshotRecord snap;
            snap.time = t;
            snap.pbar.resize(g.ny, g.nx);
            // constant q: alignment fields are uniform in space
            Mat2 cov = direction_covariance(q);
            Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
            const double order = es.eigenvalues().maxCoeff() - 0.5;
            Eigen::Vector2d axis = es.eigenvectors().col(1);
            double dir_angle = std::atan2(axis.y(), axis.x());
            if (dir_angle < 0.0) dir_angle += M_PI;
            if (dir_angle >= M_PI) dir_angle -= M_PI;
            snap.order = Eigen::ArrayXXd::Constant(g.ny, g.nx, order);
            snap.mean_dir = Eigen::ArrayXXd::Constant(g.ny, g.nx, dir_angle);

            const bool general = config.exact_method == "general";
            for (int iy = 0; iy < g.ny; ++iy) {
                for (int ix = 0; ix < g.nx; ++ix) {
                    const Vec2 x(g.x_center(ix), g.y_center(iy));
                    VelocityMeasure p =
                        general ? explicit_solution(x, t, p0, field, config.params.mu,
                                                    config.quad_steps)
                                : constant_q_solution(x, t, p0, q, config.params.mu);
                    snap.pbar(iy, ix) = mass_bar(p);
                }
            }
            char buf[48];
            std::snprintf(buf, sizeof(buf), "exact_t%.6f.csv", t);
            last_csv = (dir / buf).string();
            write_snapshot_csv(last_csv, g, snap);
            if (!quiet) log << "exact solution written for t = " << t << "\n";
        }
        write_plot_script((dir / "plot.gp").string(), fs::path(last_csv).filename().string(), g);
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SingularKernelError& e) {
        log << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
}

int cmd_steady_check(const std::string& spec_path, const std::string& out_dir, std::ostream& log,
                     bool quiet) {
    try {
        SteadySpecFile spec = load_steady_spec(spec_path);
        fs::create_directories(out_dir);
        const fs::path dir(out_dir);

        std::string text;
        std::vector<std::pair<std::string, std::string>> records;
        bool admissible = false;
        if (spec.intersection) {
            IntersectionReport rep = classify_intersection(*spec.intersection);
            text = rep.text;
            records = rep.records;
            admissible = rep.admissible;
        } else {
            NetworkReport rep = validate_patchy_network(*spec.network);
            text = rep.text;
            records = {{"curves", std::to_string(spec.network->curves.size())},
                       {"patches", std::to_string(spec.network->patches.size())},
                       {"intersections_checked", std::to_string(rep.intersections_checked)},
                       {"violations", std::to_string(rep.violations.size())},
                       {"valid", rep.valid ? "1" : "0"}};
            admissible = rep.valid;
        }

        std::ofstream rpt((dir / "steady_report.txt").string());
        rpt << text;
        std::ofstream kv((dir / "steady_report.kv").string());
        for (const auto& [k, v] : records) kv << k << " = " << v << "\n";
        if (!quiet) log << text;
        return admissible ? kExitOk : kExitInadmissible;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

int cmd_limit_study(const RunConfig& config, std::ostream& log, bool quiet) {
    try {
        fs::create_directories(config.output.directory);
        const fs::path dir(config.output.directory);
        write_manifest((dir / "manifest.txt").string(), config, "limit-study");

        DirectionMeasure q;
        if (config.initial.fibres == "uniform") {
            q = DirectionMeasure::uniform(config.n_theta);
        } else if (config.initial.fibres == "aligned") {
            q = DirectionMeasure::aligned(config.initial.fibre_gamma);
        } else if (config.initial.fibres == "directed") {
            q = DirectionMeasure::from_atoms({{config.initial.fibre_gamma, 1.0}});
        } else {
            throw ConfigError("limit-study: fibre preset must be constant (uniform, aligned, directed)");
        }

        CellField p0 = build_initial_cells(config);
        std::vector<ConvergenceRow> rows;
        try {
            rows = convergence_experiment(p0, q, config.params.mu, config.eps_list, config.t_end,
                                          config.dt_coeff);
        } catch (const std::invalid_argument& e) {
            log << "config error: " << e.what() << "\n";
            return kExitConfig;
        }

        const std::string table = (dir / "eps_table.csv").string();
        std::ofstream out(table);
        out << "eps,l1_error,weak_error,kinetic_steps\n";
        for (const ConvergenceRow& r : rows) {
            out << fmt17(r.epsilon) << ',' << fmt17(r.l1_error) << ',' << fmt17(r.weak_error) << ','
                << r.kinetic_steps << '\n';
            if (!quiet)
                log << "eps = " << r.epsilon << ": L1 = " << r.l1_error
                    << ", weak = " << r.weak_error << "\n";
        }
        std::ofstream plot((dir / "plot.gp").string());
        plot << "set datafile separator ','\nset logscale xy\n";
        plot << "set xlabel 'epsilon'\nset ylabel 'error'\n";
        plot << "set terminal pngcairo size 800,600\nset output 'limit_errors.png'\n";
        plot << "plot 'eps_table.csv' skip 1 using 1:2 with linespoints title 'L1', \\\n";
        plot << "     'eps_table.csv' skip 1 using 1:3 with linespoints title 'weak pairing'\n";
        return kExitOk;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace mesokin
