#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "kdvctrl/solver.hpp"

namespace kdvctrl {

/// Piecewise-constant boundary control on [t0, t1], one value per step cell.
/// Zero outside the declared support.
struct ControlSignal {
    double t0 = 0.0;
    double t1 = 0.0;
    double dt = 0.0;
    std::vector<double> samples;
    double support0 = 0.0;
    double support1 = 0.0;

    static ControlSignal zero(double t0, double t1, double dt);

    double value_at(double t) const;
    double l2_norm() const;           // sqrt(dt * sum samples^2)
    double sup_norm() const;
    ControlSignal scaled(double a) const;

    int cells() const { return static_cast<int>(samples.size()); }
};

/// Dense one-step propagation matrices of a solver, plus the endpoint map of
/// per-step boundary values over a K-step horizon. Columns of `endpoint` are
/// the terminal responses to a unit value held on one cell.
class LinearPropagator {
  public:
    LinearPropagator(const KdvSolver& solver, int steps);

    const Eigen::MatrixXd& step_matrix() const { return c_; }
    const Eigen::MatrixXd& forcing_matrix() const { return f_; }
    const Eigen::VectorXd& control_column() const { return d_; }
    const Eigen::MatrixXd& endpoint() const { return e_; }
    int steps() const { return steps_; }
    const KdvSolver& solver() const { return *solver_; }

    /// Terminal state of the controlled linear system from initial data u0.
    Eigen::VectorXd evolve(const Eigen::VectorXd& u0,
                           const std::vector<double>& controls) const;

  private:
    const KdvSolver* solver_;
    int steps_;
    Eigen::MatrixXd c_;  // homogeneous one-step map
    Eigen::MatrixXd f_;  // forcing-to-state one-step map
    Eigen::VectorXd d_;  // one-step response to a unit boundary value
    Eigen::MatrixXd e_;  // endpoint map, interior_dim x steps
};

struct SteeringOptions {
    double tikhonov = 1e-10;
    int param_dim = 0;      // 0: one parameter per step cell
    int refine_passes = 8;
    double h_tolerance = 1e-8;  // admissible M-component of the endpoints
    bool strict = true;     // reject targets beyond the terminal budget
};

/// Control steering the linear system from y0 to y1 over [0, T], both in H.
/// T is rounded to a whole number of steps.
ControlSignal steer_linear(const KdvSolver& solver, const StateVector& y0,
                           const StateVector& y1, double horizon,
                           const SteeringOptions& opts = {});

struct SecondOrderResult {
    StateVector alpha_t;
    StateVector beta_t;
    Eigen::VectorXd m_component;  // modal coordinates of P_M(beta_t)
};

/// First- and second-order expansion states driven by u from zero data:
/// alpha solves the controlled linear system, beta the linear system forced
/// by -alpha*alpha_x with zero boundary value.
SecondOrderResult second_order_drift(const KdvSolver& solver, const ControlSignal& u);

struct SynthesisOptions {
    unsigned seed = 20240901u;
    int starts = 5;
    int max_iterations = 160;
    double kappa_min = 1e-3;
    double null_tol_abs = 0.0;  // 0: derived from the step and grid scales
    int min_null_dim = 4;
    bool smooth_seed = true;
};

struct SynthesisResult {
    ControlSignal u0;          // unit L2 norm
    double kappa = 0.0;        // |P_{M_j} beta(T0)| at unit control norm
    double alpha_residual = 0.0;
    int null_dim = 0;
    int pair_index = 0;
};

/// Unit-norm control on [0, T0] whose first-order endpoint vanishes while the
/// second-order drift into the j-th modal plane is maximized.
SynthesisResult find_u0(const KdvSolver& solver, int pair_index, double t0,
                        const SynthesisOptions& opts = {});

struct NormalizedControl {
    ControlSignal u0;       // rescaled control, horizon padded to t_total
    double scale = 0.0;     // applied factor 1/sqrt(c)
    double wait = 0.0;      // free-evolution tail
    double t_total = 0.0;   // T0 + wait
    Eigen::Vector2d target = Eigen::Vector2d::Zero();  // plane coords at t_total
};

/// Rescales u0 so the second-order modal target has unit norm, then appends a
/// free-evolution wait so the rotated target aligns with +phi1 of the plane.
NormalizedControl normalize_u0_to_target(const KdvSolver& solver,
                                         const SynthesisResult& synthesis);

/// Mollifies a control inside its null-space parametrization: smoothing
/// followed by re-projection, preserving the first-order endpoint exactly.
ControlSignal smooth_in_null_space(const ControlSignal& u, const Eigen::MatrixXd& null_basis,
                                   int passes);

}  // namespace kdvctrl
