#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kdvctrl/closed_loop.hpp"

namespace kdvctrl {

struct ExperimentConfig {
    double length = critical_length(2, 1);
    int node_count = 256;
    int steps_per_period = 1000;  // resolution of the feedback period
    double dt_request = 0.0;      // optional explicit step; snapped to the grid
    std::vector<double> epsilons = {0.02, 0.05, 0.1};
    unsigned seed = 2024u;
    double amplitude = 0.0;  // 0: chosen per experiment
    double m_fraction = 0.5;
    int periods = 12;
    LoopMode mode = LoopMode::Delayed;
    int sampling_n = 0;
    double theta = 0.5;
    std::string out_dir;

    void validate() const;
};

/// Shared experiment state: aligned step, solver, steering library, and the
/// measured semigroup contraction factor on H.
struct ExperimentSetup {
    std::shared_ptr<KdvSolver> solver;
    SteeringLibrary library;
    double rho1_hat = 0.0;  // max ||S(T) y0||^2 / ||y0||^2 over smooth H samples
    double rho2 = 0.0;      // (rho1_hat + 1) / 2
    double dt = 0.0;
    double period = 0.0;

    const ModalSubspace& subspace() const { return *solver->subspace(); }
};

/// Chooses the step so the feedback windows align with the grid, builds the
/// library, and measures rho1.
ExperimentSetup make_experiment_setup(const ExperimentConfig& cfg);

/// Step size that aligns the window schedule for the given configuration.
double aligned_step(double length, int steps_per_period, double dt_request = 0.0);

struct DecayFitReport {
    double epsilon = 0.0;
    double lambda_hat = 0.0;
    double c_hat = 0.0;
    double r_squared = 0.0;
    double per_period_h2_factor = 0.0;  // geometric mean of ||P_H y||^2 ratios
    double per_period_m_factor = 0.0;   // geometric mean of ||P_M y|| ratios
    double zero_feedback_m_factor = 0.0;
    int periods = 0;
    double period = 0.0;
    double delta_hat = 0.0;
    double rho1_hat = 0.0;
    bool completed = true;
    std::string fail_reason;
};

/// Closed-loop run over >= 10 periods with a log-linear fit of
/// V(t) = ||P_H y|| + ||P_M y||^(1/2) at period multiples, paired with a
/// zero-feedback run of the same data.
DecayFitReport run_decay_experiment(const ExperimentSetup& setup, const ExperimentConfig& cfg,
                                    double epsilon, TrajectoryRecord* trajectory = nullptr);

struct ContractionCase {
    double epsilon = 0.0;
    std::string regime;  // "h_dominated" or "m_dominated"
    double amplitude = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double m_ratio = 0.0;  // ||P_M y(T)|| / ||P_M y(0)|| (0 when M part absent)
    bool passed = false;
};

struct ContractionReport {
    double rho2 = 0.0;
    double delta_hat = 0.0;
    std::vector<ContractionCase> cases;
    bool all_passed = true;
};

/// One-period contraction inequality
///   ||P_H y(T)||^2 + eps ||P_M y(T)|| <=
///     rho2 ||P_H y(0)||^2 + eps (1 - delta eps^2) ||P_M y(0)|| + 5% slack,
/// verified in both initial-data regimes for every configured epsilon.
ContractionReport run_contraction_check(const ExperimentSetup& setup,
                                        const ExperimentConfig& cfg);

/// Linear fit of ln(v) against x. Returns slope, intercept and R^2.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};
LineFit fit_log_linear(const std::vector<double>& x, const std::vector<double>& v);

/// Smooth pseudo-random initial data builders (deterministic in the seed).
StateVector random_smooth_h(const KdvSolver& solver, unsigned seed, int modes = 8);
StateVector random_m_direction(const KdvSolver& solver, unsigned seed);

/// Writes config echo, trajectory files (CSV + NDJSON), fit table and a text
/// summary into dir with deterministic names. Returns the file list.
std::vector<std::string> emit_report(const std::vector<TrajectoryRecord>& records,
                                     const std::vector<DecayFitReport>& reports,
                                     const ExperimentConfig& cfg, const std::string& dir);

}  // namespace kdvctrl
