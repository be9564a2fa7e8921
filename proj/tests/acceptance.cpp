// Acceptance gate: ten end-to-end checks at desk scale (L = 2*pi*sqrt(7/3),
// N = 256, one thousand steps per feedback period). Prints one line per
// criterion and exits nonzero if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "kdvctrl/control.hpp"
#include "kdvctrl/io.hpp"

using namespace kdvctrl;

namespace {

constexpr double kPi = std::numbers::pi;
int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("%s criterion %2d: %-28s %s\n", pass ? "PASS" : "FAIL", id, name,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), pattern, a, b, c);
    return std::string(buf);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

double sup_distance(const std::vector<StateVector>& a, const std::vector<StateVector>& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k)
        worst = std::max(worst, norm_l2(a[k] - b[k]));
    return worst;
}

}  // namespace

int main() {
    const auto t_begin = std::chrono::steady_clock::now();
    const double desk_length = critical_length(2, 1);

    // ---- 1. critical-length classification --------------------------------
    {
        const auto n1 = classify_length(2.0 * kPi);
        const auto n2 = classify_length(desk_length);
        const auto c = classify_length(1.0);
        bool pass = n1.cls == LengthClass::N1 && n1.dim_m == 1 && n2.cls == LengthClass::N2 &&
                    n2.dim_m == 2 && c.cls == LengthClass::C && c.dim_m == 0;
        double worst_eq = 0.0;
        for (const auto* cls : {&n1, &n2})
            for (const auto& p : cls->pairs)
                worst_eq = std::max(worst_eq,
                                    std::fabs(critical_length(p.l, p.k) - (cls == &n1 ? 2.0 * kPi
                                                                                      : desk_length)) /
                                        (cls == &n1 ? 2.0 * kPi : desk_length));
        pass = pass && worst_eq <= 1e-9;
        report(1, "length classification", pass, fmt("pair equation residual %.2e", worst_eq));
    }

    ExperimentConfig cfg;  // desk-scale defaults
    ExperimentSetup setup = make_experiment_setup(cfg);
    const KdvSolver& solver = *setup.solver;
    const ModalSubspace& sub = setup.subspace();
    const double T = setup.period;

    // ---- 2. modal basis against the explicit trigonometric profile --------
    {
        const double r21 = std::sqrt(21.0);
        StateVector ref1 = StateVector::from_function(solver.grid(), [&](double x) {
            return std::cos(5.0 * x / r21) - 3.0 * std::cos(x / r21) +
                   2.0 * std::cos(4.0 * x / r21);
        });
        StateVector ref2 = StateVector::from_function(solver.grid(), [&](double x) {
            return -std::sin(5.0 * x / r21) - 3.0 * std::sin(x / r21) +
                   2.0 * std::sin(4.0 * x / r21);
        });
        ref1 *= 1.0 / norm_l2(ref1);
        ref2 *= 1.0 / norm_l2(ref2);
        const double e1 = norm_l2(sub.basis()[0] - ref1);
        const double e2 = norm_l2(sub.basis()[1] - ref2);
        report(2, "modal basis fidelity", e1 <= 1e-4 && e2 <= 1e-4,
               fmt("L2 errors %.2e, %.2e (tol 1e-4)", e1, e2));
    }

    // ---- 3. rotation and isometry of the flow on M ------------------------
    {
        const double p = sub.modes()[0].pair.period;
        StateVector full = solver.semigroup_apply(sub.basis()[0], p);
        const double rot_err = norm_l2(full - sub.basis()[0]) / norm_l2(sub.basis()[0]);
        double iso_err = 0.0;
        double model_err = 0.0;
        for (const StateVector& phi : sub.basis()) {
            StateVector out = solver.semigroup_apply(phi, T);
            iso_err = std::max(iso_err, std::fabs(norm_l2(out) / norm_l2(phi) - 1.0));
            model_err = std::max(model_err, norm_l2(out - sub.rotate_in_m(phi, T)));
        }
        const bool pass = rot_err <= 1e-3 && iso_err <= 1e-3 && model_err <= 1e-3;
        report(3, "rotation/isometry on M", pass,
               fmt("period error %.2e, isometry %.2e, model gap %.2e", rot_err, iso_err,
                   model_err));
    }

    // ---- 4. strict contraction on H, stable under refinement --------------
    {
        ExperimentConfig fine = cfg;
        fine.node_count = 512;
        SolverConfig scfg;
        scfg.dt = setup.dt;
        KdvSolver solver512 = KdvSolver::make(cfg.length, 512, scfg);
        double rho512 = 0.0;
        for (int s = 0; s < 20; ++s) {
            StateVector y0 = random_smooth_h(solver512, 777u + 31u * static_cast<unsigned>(s));
            StateVector yt = solver512.semigroup_apply(y0, T);
            rho512 = std::max(rho512, energy(yt) / energy(y0));
        }
        const double drift = std::fabs(rho512 - setup.rho1_hat);
        const bool pass = setup.rho1_hat < 0.999 && rho512 < 0.999 && drift <= 0.05;
        report(4, "contraction on H", pass,
               fmt("rho1 %.3e (N=512: %.3e), drift %.1e of the unit scale",
                   setup.rho1_hat, rho512, drift));
    }

    // ---- 5. second-order synthesis and expansion validity ------------------
    {
        const PlaneLibrary& plane = setup.library.planes[0];
        ControlSignal unit = plane.u0.scaled(1.0 / plane.scale);
        SecondOrderResult drift = second_order_drift(solver, unit);
        const double alpha_res = norm_l2(drift.alpha_t);
        const double kappa = drift.m_component.segment(plane.basis_offset, 2).norm();

        std::vector<double> lam = {1e-1, std::pow(10.0, -1.5), 1e-2}, resid;
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(solver.interior_dim());
        for (double l : lam) {
            Eigen::VectorXd y = zero;
            for (int n = 0; n < unit.cells(); ++n)
                y = solver.step_nonlinear_interior(y, l * unit.samples[static_cast<std::size_t>(n)],
                                                   zero);
            StateVector pred = l * drift.alpha_t + (l * l) * drift.beta_t;
            resid.push_back(norm_l2(solver.from_interior(y) - pred));
        }
        const double slope = std::log10(resid[0] / resid[2]) / std::log10(lam[0] / lam[2]);
        const bool pass = alpha_res <= 1e-6 && kappa >= 1e-3 && slope >= 2.7;
        report(5, "second-order synthesis", pass,
               fmt("|alpha(T0)| %.2e, kappa %.3f, expansion slope %.2f", alpha_res, kappa,
                   slope));
    }

    // ---- 6. steering library soundness -------------------------------------
    {
        DeltaReport rep = estimate_delta(solver, setup.library, 64, 424242u);
        const bool lip_ok = std::isfinite(setup.library.lipschitz_c0) &&
                            setup.library.lipschitz_c0 > 0.0;
        const bool pass = rep.max_y1_terminal <= 1e-5 && rep.delta > 0.0 &&
                          rep.min_inner >= 2.0 * rep.delta - 1e-12 &&
                          rep.max_y2_mismatch <= 1e-4 && lip_ok;
        report(6, "library soundness", pass,
               fmt("y1(T) %.2e, delta %.4f, y2 mismatch %.2e", rep.max_y1_terminal, rep.delta,
                   rep.max_y2_mismatch));
    }

    // ---- 7. one-period contraction inequality ------------------------------
    {
        ContractionReport rep = run_contraction_check(setup, cfg);
        double worst = 0.0;
        for (const auto& c : rep.cases) worst = std::max(worst, c.lhs / c.rhs);
        report(7, "one-period contraction", rep.all_passed,
               fmt("six cases, worst lhs/rhs %.4f (cap 1.05)", worst));
    }

    // ---- 8. exponential decay of the closed loop ---------------------------
    std::vector<DecayFitReport> decay_reports;
    TrajectoryRecord decay_traj;
    {
        bool pass = true;
        double worst_r2 = 1.0, worst_gap = 1.0;
        for (double eps : cfg.epsilons) {
            TrajectoryRecord traj;
            DecayFitReport rep = run_decay_experiment(setup, cfg, eps, &traj);
            if (eps == 0.1) decay_traj = traj;
            const double cap = 1.0 - 0.5 * setup.library.delta * eps * eps;
            pass = pass && rep.completed && rep.lambda_hat > 0.0 && rep.r_squared >= 0.9 &&
                   rep.zero_feedback_m_factor >= 0.99 && rep.per_period_m_factor <= cap;
            worst_r2 = std::min(worst_r2, rep.r_squared);
            worst_gap = std::min(worst_gap, cap - rep.per_period_m_factor);
            decay_reports.push_back(rep);
        }
        report(8, "exponential decay", pass,
               fmt("worst R^2 %.4f, worst margin to the half-rate cap %.1e", worst_r2,
                   worst_gap));
    }

    // ---- 9. well-posedness machinery ---------------------------------------
    {
        FeedbackParams params;
        params.epsilon = 0.05;
        params.r_eps = 1e-3;
        params.library = &setup.library;

        StateVector y0 = 1e-3 * (0.6 * random_smooth_h(solver, 2025u) +
                                 0.4 * random_m_direction(solver, 2026u));
        LoopConfig loop;
        loop.t_end = T;
        loop.feedback = &params;
        loop.store_states = true;
        TrajectoryRecord full = integrate_closed_loop(solver, y0, 0.0, loop);
        CoupledResult split = coupled_integrate(solver, y0, 0.0, loop);
        const double agree = sup_distance(full.states, split.record.states);

        LoopConfig per = loop;
        per.mode = LoopMode::PerStep;
        TrajectoryRecord ref = integrate_closed_loop(solver, y0, 0.0, per);
        std::vector<TrajectoryRecord> delayed;
        for (int n : {4, 8, 16}) {
            LoopConfig dcfg = loop;
            dcfg.sampling_n = n;
            delayed.push_back(integrate_closed_loop(solver, y0, 0.0, dcfg));
        }
        const double d48 = sup_distance(delayed[0].states, delayed[1].states);
        const double d816 = sup_distance(delayed[1].states, delayed[2].states);

        EnergyEnvelope env = EnergyEnvelope::constant_bound(params.epsilon * setup.library.v_sup);
        EnvelopeReport er = energy_envelope_check(full, env, 1e-8);
        EnvelopeReport er2 = energy_envelope_check(decay_traj, EnergyEnvelope::constant_bound(
                                                                   0.1 * setup.library.v_sup),
                                                   1e-8);
        const bool pass = agree <= 1e-6 && d816 < d48 && er.ok && er2.ok;
        report(9, "well-posedness machinery", pass,
               fmt("coupled gap %.2e, delay Cauchy %.2e -> %.2e", agree, d48, d816));
    }

    // ---- 10. runtime budget and determinism --------------------------------
    {
        namespace fs = std::filesystem;
        const fs::path base = fs::temp_directory_path() / "kdvctrl_acceptance_rerun";
        fs::remove_all(base);
        fs::create_directories(base);
        TrajectoryRecord again;
        DecayFitReport rep2 = run_decay_experiment(setup, cfg, 0.1, &again);
        (void)rep2;
        write_trajectory_csv(decay_traj, (base / "a.csv").string());
        write_trajectory_csv(again, (base / "b.csv").string());
        const bool identical = slurp((base / "a.csv").string()) == slurp((base / "b.csv").string());
        fs::remove_all(base);

        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
        const bool pass = identical && elapsed <= 600.0;
        report(10, "runtime and determinism", pass,
               fmt("%.1f s elapsed (cap 600), rerun byte-identical: %.0f", elapsed,
                   identical ? 1.0 : 0.0));
    }

    std::printf("%s: %d of 10 criteria passed\n", g_failures == 0 ? "OK" : "FAILED",
                10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
