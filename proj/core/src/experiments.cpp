#include "kdvctrl/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "kdvctrl/io.hpp"

namespace kdvctrl {

void ExperimentConfig::validate() const {
    if (node_count < 16) throw ConfigError("config: grid must have at least 16 nodes");
    if (steps_per_period < 40) throw ConfigError("config: steps_per_period too small");
    if (periods < 1) throw ConfigError("config: periods must be positive");
    if (epsilons.empty()) throw ConfigError("config: need at least one epsilon");
    for (double e : epsilons)
        if (e <= 0.0 || e >= 1.0) throw ConfigError("config: epsilon must lie in (0,1)");
    if (theta < 0.5 || theta > 1.0) throw ConfigError("config: theta in [1/2, 1]");
    if (m_fraction < 0.0 || m_fraction > 1.0) throw ConfigError("config: m_fraction in [0,1]");
}

double aligned_step(double length, int steps_per_period, double dt_request) {
    const LengthClassification cls = classify_length(length);
    if (cls.cls == LengthClass::C || cls.pairs.front().degenerate()) {
        // No window schedule to align; any step works.
        return (dt_request > 0.0) ? dt_request
                                  : length / static_cast<double>(steps_per_period);
    }
    const double q = cls.pairs.front().period / 4.0;
    if (dt_request > 0.0) {
        const auto cells = std::max<long long>(8, std::llround(q / dt_request));
        return q / static_cast<double>(cells);
    }
    // Four windows of (mq - gap) cells spaced mq cells give a period of
    // (4 mq - gap) cells; mq = (steps + 4) / 4 makes that equal steps.
    const auto mq = std::max<long long>(8, std::llround((steps_per_period + 4) / 4.0));
    return q / static_cast<double>(mq);
}

StateVector random_smooth_h(const KdvSolver& solver, unsigned seed, int modes) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const SpatialGrid& grid = solver.grid();
    std::vector<double> coef(static_cast<std::size_t>(modes));
    for (auto& c : coef) c = gauss(rng);
    StateVector y = StateVector::from_function(grid, [&](double x) {
        double s = 0.0;
        for (int j = 0; j < modes; ++j)
            s += coef[static_cast<std::size_t>(j)] *
                 std::sin((j + 1) * std::numbers::pi * x / grid.length);
        return s;
    });
    if (solver.subspace()) {
        // Two projection passes: one pass leaves rounding-level modal residue,
        // which the sqrt-scaled feedback would amplify at tiny amplitudes.
        y = solver.subspace()->project_h(solver.subspace()->project_h(y));
    }
    const double n = norm_l2(y);
    if (n <= 0.0) throw SolverFailure("random_smooth_h: degenerate sample");
    y *= 1.0 / n;
    return y;
}

StateVector random_m_direction(const KdvSolver& solver, unsigned seed) {
    const ModalSubspace* sub = solver.subspace();
    if (!sub) throw DomainError("random_m_direction: no modal subspace");
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd m(sub->dim());
    for (int i = 0; i < m.size(); ++i) m[i] = gauss(rng);
    m.normalize();
    return sub->from_coefficients(m / std::sqrt(solver.grid().dx));
}

ExperimentSetup make_experiment_setup(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentSetup setup;
    setup.dt = aligned_step(cfg.length, cfg.steps_per_period, cfg.dt_request);

    SolverConfig scfg;
    scfg.dt = setup.dt;
    scfg.theta = cfg.theta;
    setup.solver = std::make_shared<KdvSolver>(KdvSolver::make(cfg.length, cfg.node_count, scfg));

    LibraryBuildOptions lopts;
    setup.library = build_steering_library(*setup.solver, lopts);
    setup.period = setup.library.period;

    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        StateVector y0 = random_smooth_h(*setup.solver, 777u + 31u * static_cast<unsigned>(s));
        StateVector yt = setup.solver->semigroup_apply(y0, setup.period);
        worst = std::max(worst, energy(yt) / energy(y0));
    }
    setup.rho1_hat = worst;
    setup.rho2 = 0.5 * (setup.rho1_hat + 1.0);
    return setup;
}

LineFit fit_log_linear(const std::vector<double>& x, const std::vector<double>& v) {
    if (x.size() != v.size() || x.size() < 2)
        throw DomainError("fit_log_linear: need two or more samples");
    const auto n = static_cast<double>(x.size());
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] <= 0.0) throw DomainError("fit_log_linear: values must be positive");
        w[i] = std::log(v[i]);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        sx += x[i];
        sy += w[i];
        sxx += x[i] * x[i];
        sxy += x[i] * w[i];
    }
    LineFit fit;
    const double denom = n * sxx - sx * sx;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double mean = sy / n;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double pred = fit.intercept + fit.slope * x[i];
        ss_res += (w[i] - pred) * (w[i] - pred);
        ss_tot += (w[i] - mean) * (w[i] - mean);
    }
    fit.r_squared = (ss_tot > 0.0) ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

namespace {

StateVector mixed_initial_data(const ExperimentSetup& setup, const ExperimentConfig& cfg,
                               double amplitude) {
    const KdvSolver& solver = *setup.solver;
    StateVector h_part = random_smooth_h(solver, cfg.seed * 2654435761u + 1u);
    StateVector m_part = random_m_direction(solver, cfg.seed * 40503u + 7u);
    StateVector y = (1.0 - cfg.m_fraction) * h_part + cfg.m_fraction * m_part;
    const double n = norm_l2(y);
    y *= amplitude / n;
    return y;
}

double geometric_factor(const std::vector<double>& values, int period_steps, int periods) {
    // Geometric mean of the per-period ratios, i.e. (last/first)^(1/periods).
    const double first = values.front();
    const double last = values[static_cast<std::size_t>(period_steps) *
                               static_cast<std::size_t>(periods)];
    if (first <= 0.0) return 1.0;
    return std::pow(last / first, 1.0 / periods);
}

}  // namespace

DecayFitReport run_decay_experiment(const ExperimentSetup& setup, const ExperimentConfig& cfg,
                                    double epsilon, TrajectoryRecord* trajectory) {
    const KdvSolver& solver = *setup.solver;
    const double T = setup.period;
    const int period_steps = static_cast<int>(std::llround(T / setup.dt));
    const int periods = std::max(cfg.periods, 10);

    DecayFitReport rep;
    rep.epsilon = epsilon;
    rep.periods = periods;
    rep.period = T;
    rep.delta_hat = setup.library.delta;
    rep.rho1_hat = setup.rho1_hat;

    const double amplitude =
        (cfg.amplitude > 0.0) ? cfg.amplitude : 1e-6;
    StateVector y0 = mixed_initial_data(setup, cfg, amplitude);

    FeedbackParams params;
    params.epsilon = epsilon;
    params.r_eps = std::min(std::pow(epsilon, 12.0), 1e-3);
    params.library = &setup.library;

    LoopConfig loop;
    loop.mode = cfg.mode;
    loop.sampling_n = cfg.sampling_n;
    loop.t_end = periods * T;
    loop.feedback = &params;

    TrajectoryRecord rec;
    try {
        rec = integrate_closed_loop(solver, y0, 0.0, loop);
    } catch (const BlowUpError& e) {
        rep.completed = false;
        rep.fail_reason = e.what();
        return rep;
    }

    std::vector<double> tk, vk, mk, h2k;
    for (int k = 0; k <= periods; ++k) {
        const auto idx = static_cast<std::size_t>(k) * static_cast<std::size_t>(period_steps);
        tk.push_back(rec.t[idx]);
        vk.push_back(rec.norm_h[idx] + std::sqrt(rec.norm_m[idx]));
        mk.push_back(rec.norm_m[idx]);
        h2k.push_back(rec.norm_h[idx] * rec.norm_h[idx]);
    }
    LineFit fit = fit_log_linear(tk, vk);
    rep.lambda_hat = -fit.slope;
    rep.c_hat = std::exp(fit.intercept) / vk.front();
    rep.r_squared = fit.r_squared;
    rep.per_period_m_factor = geometric_factor(mk, 1, periods);
    rep.per_period_h2_factor =
        (h2k.front() > 0.0) ? std::pow(h2k.back() / h2k.front(), 1.0 / periods) : 0.0;
    rec.fitted_lambda = rep.lambda_hat;

    // Paired run without feedback: the M component must be nearly conserved.
    LoopConfig zero_loop = loop;
    zero_loop.feedback = nullptr;
    zero_loop.t_end = T;
    TrajectoryRecord zrec = integrate_closed_loop(solver, y0, 0.0, zero_loop);
    rep.zero_feedback_m_factor =
        (zrec.norm_m.front() > 0.0) ? zrec.norm_m.back() / zrec.norm_m.front() : 1.0;

    if (trajectory) *trajectory = std::move(rec);
    return rep;
}

ContractionReport run_contraction_check(const ExperimentSetup& setup,
                                        const ExperimentConfig& cfg) {
    const KdvSolver& solver = *setup.solver;
    const ModalSubspace& sub = setup.subspace();
    const double T = setup.period;

    ContractionReport rep;
    rep.rho2 = setup.rho2;
    rep.delta_hat = setup.library.delta;

    for (double eps : cfg.epsilons) {
        FeedbackParams params;
        params.epsilon = eps;
        params.r_eps = std::min(std::pow(eps, 12.0), 1e-3);
        params.library = &setup.library;

        const double amp = (cfg.amplitude > 0.0)
                               ? std::min(cfg.amplitude, 0.999 * params.r_eps)
                               : 0.9 * params.r_eps;

        for (int regime = 0; regime < 2; ++regime) {
            StateVector h_dir = random_smooth_h(solver, cfg.seed * 7919u + 11u);
            StateVector m_dir = random_m_direction(solver, cfg.seed * 104729u + 13u);
            StateVector y0(solver.grid());
            if (regime == 0) {
                y0 = amp * h_dir;  // pure H data sits inside the first regime
            } else {
                y0 = amp * m_dir;
            }

            LoopConfig loop;
            loop.mode = cfg.mode;
            loop.sampling_n = cfg.sampling_n;
            loop.t_end = T;
            loop.feedback = &params;

            ContractionCase cc;
            cc.epsilon = eps;
            cc.regime = (regime == 0) ? "h_dominated" : "m_dominated";
            cc.amplitude = amp;

            TrajectoryRecord rec;
            try {
                rec = integrate_closed_loop(solver, y0, 0.0, loop);
            } catch (const BlowUpError&) {
                cc.passed = false;
                rep.cases.push_back(cc);
                rep.all_passed = false;
                continue;
            }
            // Endpoint norms from the exact split channel of the integrator.
            const double h0 = rec.norm_h.front();
            const double m0 = rec.norm_m.front();
            const double ht = rec.norm_h.back();
            const double mt = rec.norm_m.back();
            cc.lhs = ht * ht + eps * mt;
            cc.rhs = setup.rho2 * h0 * h0 + eps * (1.0 - setup.library.delta * eps * eps) * m0;
            cc.m_ratio = (m0 > 0.0) ? mt / m0 : 0.0;
            cc.passed = cc.lhs <= 1.05 * cc.rhs;
            rep.all_passed = rep.all_passed && cc.passed;
            rep.cases.push_back(cc);
        }
    }
    return rep;
}

std::vector<std::string> emit_report(const std::vector<TrajectoryRecord>& records,
                                     const std::vector<DecayFitReport>& reports,
                                     const ExperimentConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> written;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("emit_report: cannot create directory " + dir);

    auto emit = [&](const std::string& name, const std::string& body) {
        const std::string path = (fs::path(dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ConfigError("emit_report: cannot open " + path);
        out << body;
        written.push_back(path);
    };

    emit("config_echo.json", config_to_json(cfg));

    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string base = "trajectory_" + std::to_string(i);
        const std::string csv_path = (fs::path(dir) / (base + ".csv")).string();
        const std::string nd_path = (fs::path(dir) / (base + ".ndjson")).string();
        write_trajectory_csv(records[i], csv_path);
        write_trajectory_ndjson(records[i], nd_path);
        written.push_back(csv_path);
        written.push_back(nd_path);
    }

    std::string fits = "eps,lambda_hat,c_hat,r_squared,per_period_m_factor,"
                       "per_period_h2_factor,zero_feedback_m_factor,completed\r\n";
    for (const auto& r : reports) {
        fits += format_double(r.epsilon) + "," + format_double(r.lambda_hat) + "," +
                format_double(r.c_hat) + "," + format_double(r.r_squared) + "," +
                format_double(r.per_period_m_factor) + "," +
                format_double(r.per_period_h2_factor) + "," +
                format_double(r.zero_feedback_m_factor) + "," +
                (r.completed ? "1" : "0") + "\r\n";
    }
    emit("fits.csv", fits);

    std::string summary;
    summary += "runs: " + std::to_string(records.size()) + "\n";
    for (const auto& r : reports) {
        summary += "eps=" + format_double(r.epsilon);
        if (!r.completed) {
            summary += "  FAILED: " + r.fail_reason + "\n";
            continue;
        }
        summary += "  lambda_hat=" + format_double(r.lambda_hat) +
                   "  r2=" + format_double(r.r_squared) +
                   "  m_factor=" + format_double(r.per_period_m_factor) +
                   "  zero_feedback_m_factor=" + format_double(r.zero_feedback_m_factor) +
                   "\n";
    }
    emit("summary.txt", summary);
    return written;
}

}  // namespace kdvctrl
