// Command-line front end: classification, basis export, library synthesis,
// closed-loop simulation, decay and contraction experiments.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "kdvctrl/experiments.hpp"
#include "kdvctrl/io.hpp"

using namespace kdvctrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitExperimentFailed = 2;
constexpr int kExitSynthesisFailed = 3;
constexpr int kExitBadConfig = 4;

struct CliFlags {
    std::string config_path;
    ExperimentConfig cfg;
};

void add_common_flags(CLI::App* cmd, CliFlags& flags) {
    cmd->add_option("--config", flags.config_path,
                    "key=value or JSON configuration file (overrides flags)");
    cmd->add_option("--length", flags.cfg.length, "interval length L");
    cmd->add_option("--grid", flags.cfg.node_count, "grid node count");
    cmd->add_option("--dt", flags.cfg.dt_request, "requested time step (snapped to the window grid)");
    cmd->add_option("--steps-per-period", flags.cfg.steps_per_period,
                    "feedback period resolution when --dt is not given");
    cmd->add_option("--eps", flags.cfg.epsilons, "feedback gains")->delimiter(',');
    cmd->add_option("--seed", flags.cfg.seed, "experiment seed");
    cmd->add_option("--out", flags.cfg.out_dir, "output directory");
    cmd->add_option("--periods", flags.cfg.periods, "horizon in feedback periods");
    cmd->add_option("--amplitude", flags.cfg.amplitude, "initial data amplitude");
    cmd->add_option("--m-fraction", flags.cfg.m_fraction, "M share of the initial mixture");
    cmd->add_option("--sampling-n", flags.cfg.sampling_n, "delayed-sampling rate n (delay 1/n)");
    std::map<std::string, LoopMode> modes{{"delayed", LoopMode::Delayed},
                                          {"per_step", LoopMode::PerStep}};
    cmd->add_option("--mode", flags.cfg.mode, "feedback sampling mode")
        ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
}

ExperimentConfig finalize(const CliFlags& flags) {
    ExperimentConfig cfg = flags.cfg;
    if (!flags.config_path.empty()) cfg = parse_config_file(flags.config_path, cfg);
    cfg.validate();
    return cfg;
}

int run_classify(const ExperimentConfig& cfg) {
    LengthClassification cls = classify_length(cfg.length);
    std::printf("L = %s\nclass = %s\ndim M = %d\n", format_double(cfg.length).c_str(),
                to_string(cls.cls).c_str(), cls.dim_m);
    for (const CriticalPair& p : cls.pairs)
        std::printf("pair (%d, %d): omega = %s, period = %s\n", p.l, p.k,
                    format_double(p.omega).c_str(), format_double(p.period).c_str());
    return kExitOk;
}

int run_basis(const ExperimentConfig& cfg) {
    SpatialGrid grid = SpatialGrid::make(cfg.length, cfg.node_count);
    ModalSubspace sub = ModalSubspace::build(cfg.length, grid);
    const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / "basis.csv").string();
    sub.export_csv(path);
    std::printf("dim M = %d, equation residual = %s\nwrote %s\n", sub.dim(),
                format_double(sub.equation_residual()).c_str(), path.c_str());
    return kExitOk;
}

int run_synthesize(const ExperimentConfig& cfg) {
    ExperimentSetup setup = make_experiment_setup(cfg);
    const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);
    const auto base = std::filesystem::path(dir);
    save_library(setup.library, (base / "steering_library.bin").string());
    save_library_csv(setup.library, (base / "steering_library.csv").string());
    std::printf("T = %s, delta = %s, lipschitz C0 = %s, sup|v| = %s\n",
                format_double(setup.library.period).c_str(),
                format_double(setup.library.delta).c_str(),
                format_double(setup.library.lipschitz_c0).c_str(),
                format_double(setup.library.v_sup).c_str());
    for (const PlaneLibrary& p : setup.library.planes)
        std::printf("plane (%d,%d): kappa = %s at unit control norm\n", p.pair.l, p.pair.k,
                    format_double(p.kappa).c_str());
    std::printf("wrote %s and %s\n", (base / "steering_library.bin").c_str(),
                (base / "steering_library.csv").c_str());
    return kExitOk;
}

int run_simulate(const ExperimentConfig& cfg) {
    ExperimentSetup setup = make_experiment_setup(cfg);
    FeedbackParams params;
    params.epsilon = cfg.epsilons.front();
    params.r_eps = std::min(std::pow(params.epsilon, 12.0), 1e-3);
    params.library = &setup.library;

    const double amplitude = (cfg.amplitude > 0.0) ? cfg.amplitude : 1e-6;
    StateVector h_part = random_smooth_h(*setup.solver, cfg.seed * 2654435761u + 1u);
    StateVector m_part = random_m_direction(*setup.solver, cfg.seed * 40503u + 7u);
    StateVector y0 = (1.0 - cfg.m_fraction) * h_part + cfg.m_fraction * m_part;
    y0 *= amplitude / norm_l2(y0);

    LoopConfig loop;
    loop.mode = cfg.mode;
    loop.sampling_n = cfg.sampling_n;
    loop.t_end = cfg.periods * setup.period;
    loop.feedback = &params;

    TrajectoryRecord rec = integrate_closed_loop(*setup.solver, y0, 0.0, loop);
    const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::vector<std::string> files = emit_report({rec}, {}, cfg, dir);
    for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
    return kExitOk;
}

int run_decay(const ExperimentConfig& cfg) {
    ExperimentSetup setup = make_experiment_setup(cfg);
    std::vector<DecayFitReport> reports;
    std::vector<TrajectoryRecord> records;
    bool ok = true;
    for (double eps : cfg.epsilons) {
        TrajectoryRecord rec;
        DecayFitReport rep = run_decay_experiment(setup, cfg, eps, &rec);
        if (rep.completed) records.push_back(std::move(rec));
        ok = ok && rep.completed && rep.lambda_hat > 0.0;
        std::printf("eps=%s lambda_hat=%s r2=%s m_factor=%s zero_m_factor=%s%s\n",
                    format_double(rep.epsilon).c_str(), format_double(rep.lambda_hat).c_str(),
                    format_double(rep.r_squared).c_str(),
                    format_double(rep.per_period_m_factor).c_str(),
                    format_double(rep.zero_feedback_m_factor).c_str(),
                    rep.completed ? "" : "  [FAILED]");
        reports.push_back(std::move(rep));
    }
    if (!cfg.out_dir.empty()) emit_report(records, reports, cfg, cfg.out_dir);
    return ok ? kExitOk : kExitExperimentFailed;
}

int run_contract(const ExperimentConfig& cfg) {
    ExperimentSetup setup = make_experiment_setup(cfg);
    ContractionReport rep = run_contraction_check(setup, cfg);
    std::printf("rho2 = %s, delta_hat = %s\n", format_double(rep.rho2).c_str(),
                format_double(rep.delta_hat).c_str());
    for (const ContractionCase& c : rep.cases)
        std::printf("eps=%s %-12s amplitude=%s lhs=%s rhs=%s  %s\n",
                    format_double(c.epsilon).c_str(), c.regime.c_str(),
                    format_double(c.amplitude).c_str(), format_double(c.lhs).c_str(),
                    format_double(c.rhs).c_str(), c.passed ? "PASS" : "FAIL");
    return rep.all_passed ? kExitOk : kExitExperimentFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Boundary feedback stabilization toolkit for the KdV equation "
                 "on critical-length intervals"};
    app.require_subcommand(1);

    CliFlags flags;
    auto* classify = app.add_subcommand("classify", "classify a length and list its pairs");
    auto* basis = app.add_subcommand("basis", "export the modal basis as CSV");
    auto* synthesize = app.add_subcommand("synthesize", "build and save the steering library");
    auto* simulate = app.add_subcommand("simulate", "one closed-loop run with trajectory output");
    auto* decay = app.add_subcommand("decay", "decay-rate experiment over the gain grid");
    auto* contract = app.add_subcommand("contract", "one-period contraction verification");
    for (CLI::App* cmd : {classify, basis, synthesize, simulate, decay, contract})
        add_common_flags(cmd, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return (code == 0) ? kExitOk : kExitBadConfig;
    }

    try {
        const ExperimentConfig cfg = finalize(flags);
        if (classify->parsed()) return run_classify(cfg);
        if (basis->parsed()) return run_basis(cfg);
        if (synthesize->parsed()) return run_synthesize(cfg);
        if (simulate->parsed()) return run_simulate(cfg);
        if (decay->parsed()) return run_decay(cfg);
        if (contract->parsed()) return run_contract(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitBadConfig;
    } catch (const SynthesisFailure& e) {
        std::fprintf(stderr, "synthesis failed: %s\n", e.what());
        return kExitSynthesisFailed;
    } catch (const LibraryInvalidError& e) {
        std::fprintf(stderr, "synthesis failed: %s\n", e.what());
        return kExitSynthesisFailed;
    } catch (const BlowUpError& e) {
        std::fprintf(stderr, "experiment failed: %s\n", e.what());
        return kExitExperimentFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitExperimentFailed;
    }
    return kExitBadConfig;
}
