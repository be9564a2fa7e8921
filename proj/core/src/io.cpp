#include "kdvctrl/io.hpp"

#include <charconv>
#include <limits>
#include <numbers>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace kdvctrl {

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_trajectory_csv(const TrajectoryRecord& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("write_trajectory_csv: cannot open " + path);
    out << "t,E,normH,normM,u\r\n";
    for (std::size_t k = 0; k < rec.t.size(); ++k) {
        out << format_double(rec.t[k]) << ',' << format_double(rec.energy_series[k]) << ','
            << format_double(rec.norm_h[k]) << ',' << format_double(rec.norm_m[k]) << ','
            << format_double(rec.control[k]) << "\r\n";
    }
}

void write_trajectory_ndjson(const TrajectoryRecord& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("write_trajectory_ndjson: cannot open " + path);
    for (std::size_t k = 0; k < rec.t.size(); ++k) {
        out << "{\"t\":" << format_double(rec.t[k])
            << ",\"E\":" << format_double(rec.energy_series[k])
            << ",\"normH\":" << format_double(rec.norm_h[k])
            << ",\"normM\":" << format_double(rec.norm_m[k])
            << ",\"u\":" << format_double(rec.control[k]) << "}\n";
    }
}

namespace {

LoopMode parse_mode(const std::string& value) {
    if (value == "delayed") return LoopMode::Delayed;
    if (value == "per_step") return LoopMode::PerStep;
    throw ConfigError("config: mode must be 'delayed' or 'per_step'");
}

double parse_number(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for key '" + key + "': " + value);
    }
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(parse_number(key, item));
    if (out.empty()) throw ConfigError("config: empty list for key '" + key + "'");
    return out;
}

}  // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& key,
                        const std::string& value) {
    if (key == "length") cfg.length = parse_number(key, value);
    else if (key == "grid") cfg.node_count = static_cast<int>(parse_number(key, value));
    else if (key == "dt") cfg.dt_request = parse_number(key, value);
    else if (key == "steps_per_period") cfg.steps_per_period = static_cast<int>(parse_number(key, value));
    else if (key == "eps") cfg.epsilons = parse_list(key, value);
    else if (key == "seed") cfg.seed = static_cast<unsigned>(parse_number(key, value));
    else if (key == "amplitude") cfg.amplitude = parse_number(key, value);
    else if (key == "m_fraction") cfg.m_fraction = parse_number(key, value);
    else if (key == "periods") cfg.periods = static_cast<int>(parse_number(key, value));
    else if (key == "mode") cfg.mode = parse_mode(value);
    else if (key == "sampling_n") cfg.sampling_n = static_cast<int>(parse_number(key, value));
    else if (key == "theta") cfg.theta = parse_number(key, value);
    else if (key == "out") cfg.out_dir = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    if (json) {
        nlohmann::json doc;
        try {
            in >> doc;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: invalid JSON: ") + e.what());
        }
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            std::string v;
            if (it->is_string()) {
                v = it->get<std::string>();
            } else if (it->is_array()) {
                for (const auto& x : *it) {
                    if (!v.empty()) v += ',';
                    v += format_double(x.get<double>());
                }
            } else {
                v = format_double(it->get<double>());
            }
            apply_config_entry(base, it.key(), v);
        }
        return base;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
        apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json doc;
    doc["length"] = cfg.length;
    doc["grid"] = cfg.node_count;
    doc["steps_per_period"] = cfg.steps_per_period;
    if (cfg.dt_request > 0.0) doc["dt"] = cfg.dt_request;
    doc["eps"] = cfg.epsilons;
    doc["seed"] = cfg.seed;
    doc["amplitude"] = cfg.amplitude;
    doc["m_fraction"] = cfg.m_fraction;
    doc["periods"] = cfg.periods;
    doc["mode"] = (cfg.mode == LoopMode::Delayed) ? "delayed" : "per_step";
    doc["sampling_n"] = cfg.sampling_n;
    doc["theta"] = cfg.theta;
    doc["out"] = cfg.out_dir;
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Steering library container: magic, version, scalar header, then per-plane
// records with the control samples as little-endian 64-bit floats.

namespace {

constexpr char kMagic[8] = {'K', 'D', 'V', 'S', 'L', 'I', 'B', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ConfigError("load_library: truncated file");
    return v;
}

}  // namespace

void save_library(const SteeringLibrary& lib, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_library: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, lib.length);
    put(out, static_cast<std::uint32_t>(lib.node_count));
    put(out, lib.dt);
    put(out, lib.period);
    put(out, lib.delta);
    put(out, lib.lipschitz_c0);
    put(out, lib.v_sup);
    put(out, static_cast<std::uint32_t>(lib.delta_samples));
    put(out, static_cast<std::uint32_t>(lib.planes.size()));
    for (const PlaneLibrary& p : lib.planes) {
        put(out, static_cast<std::uint32_t>(p.pair.l));
        put(out, static_cast<std::uint32_t>(p.pair.k));
        put(out, p.pair.omega);
        put(out, static_cast<std::uint32_t>(p.pair_index));
        put(out, static_cast<std::uint32_t>(p.basis_offset));
        put(out, p.q_exact);
        put(out, p.q_snap);
        put(out, p.span);
        for (double w : p.window_start) put(out, w);
        for (const auto& psi : p.psi) {
            put(out, psi[0]);
            put(out, psi[1]);
        }
        put(out, p.kappa);
        put(out, p.scale);
        put(out, p.u0.t0);
        put(out, p.u0.t1);
        put(out, p.u0.dt);
        put(out, p.u0.support0);
        put(out, p.u0.support1);
        put(out, static_cast<std::uint32_t>(p.u0.samples.size()));
        for (double v : p.u0.samples) put(out, v);
    }
}

SteeringLibrary load_library(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("load_library: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("load_library: not a steering library file");
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) throw ConfigError("load_library: unsupported version");
    SteeringLibrary lib;
    lib.length = get<double>(in);
    lib.node_count = static_cast<int>(get<std::uint32_t>(in));
    lib.dt = get<double>(in);
    lib.period = get<double>(in);
    lib.delta = get<double>(in);
    lib.lipschitz_c0 = get<double>(in);
    lib.v_sup = get<double>(in);
    lib.delta_samples = static_cast<int>(get<std::uint32_t>(in));
    const auto n = get<std::uint32_t>(in);
    for (std::uint32_t j = 0; j < n; ++j) {
        PlaneLibrary p;
        p.pair.l = static_cast<int>(get<std::uint32_t>(in));
        p.pair.k = static_cast<int>(get<std::uint32_t>(in));
        p.pair.omega = get<double>(in);
        p.pair.period = (p.pair.l == p.pair.k) ? std::numeric_limits<double>::infinity()
                                               : 2.0 * std::numbers::pi / p.pair.omega;
        p.pair_index = static_cast<int>(get<std::uint32_t>(in));
        p.basis_offset = static_cast<int>(get<std::uint32_t>(in));
        p.q_exact = get<double>(in);
        p.q_snap = get<double>(in);
        p.span = get<double>(in);
        for (double& w : p.window_start) w = get<double>(in);
        for (auto& psi : p.psi) {
            psi[0] = get<double>(in);
            psi[1] = get<double>(in);
        }
        p.kappa = get<double>(in);
        p.scale = get<double>(in);
        p.u0.t0 = get<double>(in);
        p.u0.t1 = get<double>(in);
        p.u0.dt = get<double>(in);
        p.u0.support0 = get<double>(in);
        p.u0.support1 = get<double>(in);
        const auto cells = get<std::uint32_t>(in);
        p.u0.samples.resize(cells);
        for (auto& v : p.u0.samples) v = get<double>(in);
        lib.planes.push_back(std::move(p));
    }
    return lib;
}

void save_library_csv(const SteeringLibrary& lib, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("save_library_csv: cannot open " + path);
    out << "# steering library mirror\r\n";
    out << "L," << format_double(lib.length) << "\r\n";
    out << "grid," << lib.node_count << "\r\n";
    out << "dt," << format_double(lib.dt) << "\r\n";
    out << "T," << format_double(lib.period) << "\r\n";
    out << "delta," << format_double(lib.delta) << "\r\n";
    out << "lipschitz_c0," << format_double(lib.lipschitz_c0) << "\r\n";
    out << "v_sup," << format_double(lib.v_sup) << "\r\n";
    out << "plane,l,k,omega,q,span,tau1,tau2,tau3,tau4,kappa,scale\r\n";
    for (std::size_t j = 0; j < lib.planes.size(); ++j) {
        const PlaneLibrary& p = lib.planes[j];
        out << j << ',' << p.pair.l << ',' << p.pair.k << ',' << format_double(p.pair.omega)
            << ',' << format_double(p.q_snap) << ',' << format_double(p.span);
        for (double w : p.window_start) out << ',' << format_double(w);
        out << ',' << format_double(p.kappa) << ',' << format_double(p.scale) << "\r\n";
    }
    out << "plane,cell,t,u0\r\n";
    for (std::size_t j = 0; j < lib.planes.size(); ++j) {
        const PlaneLibrary& p = lib.planes[j];
        for (std::size_t c = 0; c < p.u0.samples.size(); ++c)
            out << j << ',' << c << ',' << format_double(p.u0.t0 + p.u0.dt * static_cast<double>(c))
                << ',' << format_double(p.u0.samples[c]) << "\r\n";
    }
}

}  // namespace kdvctrl
