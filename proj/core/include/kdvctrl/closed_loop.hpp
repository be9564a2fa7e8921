#pragma once

#include <functional>
#include <string>

#include "kdvctrl/feedback.hpp"

namespace kdvctrl {

enum class LoopMode { Delayed, PerStep };

/// Closed-loop integration settings. In delayed mode the feedback at step n
/// is evaluated on the state one delay window earlier (frozen at the initial
/// state during the first window); in per-step mode on the current state.
struct LoopConfig {
    LoopMode mode = LoopMode::Delayed;
    int sampling_n = 0;          // delay = 1/sampling_n; 0 means one step
    double t_end = 0.0;          // integration span past the start time
    const FeedbackParams* feedback = nullptr;  // null: zero boundary slope
    double blowup_factor = 1e6;
    bool store_states = false;
    bool disable_nonlinearity = false;
};

struct TrajectoryRecord {
    double start_time = 0.0;
    double dt = 0.0;
    std::vector<double> t;
    std::vector<double> norm_h;
    std::vector<double> norm_m;
    std::vector<double> energy_series;
    std::vector<double> control;  // value held on [t_k, t_{k+1}); last entry 0
    StateVector final_state;
    std::vector<StateVector> states;  // populated when store_states

    int samples() const { return static_cast<int>(t.size()); }
    double fitted_lambda = 0.0;  // filled by the decay fit when requested
};

/// Integrates y_t + y_x + y_xxx + y y_x = 0, y_x(t,L) = u(t, y) from y0 at
/// time s. Throws BlowUpError when the energy passes the blow-up threshold or
/// the nonlinear solve stops contracting.
TrajectoryRecord integrate_closed_loop(const KdvSolver& solver, const StateVector& y0,
                                       double s, const LoopConfig& cfg);

struct CoupledResult {
    TrajectoryRecord record;
    StateVector y1_final;  // H channel
    StateVector y2_final;  // M channel
};

/// Evolves the projected pair (P_H y, P_M y) as a coupled system: the H
/// channel carries the boundary control, the M channel has a zero right
/// slope, and the quadratic term of the sum is split by the projectors.
/// Used as a cross-check oracle against integrate_closed_loop.
CoupledResult coupled_integrate(const KdvSolver& solver, const StateVector& y0,
                                double s, const LoopConfig& cfg);

/// A-priori energy growth bound E(t) <= H^-1(H(E(s)) + (t-s)) for a feedback
/// bounded by C_B(sqrt(E)).
class EnergyEnvelope {
  public:
    /// C_B identically zero: pure dissipation, E(t) <= E(s).
    static EnergyEnvelope dissipation_only();
    /// Constant bound: E(t) <= E(s) + c^2 (t - s).
    static EnergyEnvelope constant_bound(double c);
    /// General nondecreasing bound R -> C_B(R) >= 0, integrated numerically.
    static EnergyEnvelope from_bound(std::function<double(double)> c_of_r);

    double bound(double e_start, double elapsed) const;
    double h_value(double a) const;
    double h_inverse(double v) const;

  private:
    enum class Kind { Zero, Constant, General };
    Kind kind_ = Kind::Zero;
    double c_ = 0.0;
    std::function<double(double)> c_of_r_;
};

struct EnvelopeReport {
    bool ok = true;
    double max_violation = 0.0;
    int violations = 0;
};

/// Checks E(t_k) <= bound(E(t_0), t_k - t_0) + tol for every recorded step.
EnvelopeReport energy_envelope_check(const TrajectoryRecord& record,
                                     const EnergyEnvelope& envelope, double tol = 1e-8);

/// Largest per-step violation of dE <= u^2 dt along a recorded trajectory.
double energy_budget_violation(const TrajectoryRecord& record);

}  // namespace kdvctrl
