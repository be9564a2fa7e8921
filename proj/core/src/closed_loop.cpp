#include "kdvctrl/closed_loop.hpp"

#include <cmath>
#include <deque>

namespace kdvctrl {

namespace {

int delay_steps_for(const LoopConfig& cfg, double dt) {
    if (cfg.mode != LoopMode::Delayed) return 0;
    if (cfg.sampling_n <= 0) return 1;
    return std::max(1, static_cast<int>(std::llround(1.0 / (cfg.sampling_n * dt))));
}

}  // namespace

TrajectoryRecord integrate_closed_loop(const KdvSolver& solver, const StateVector& y0,
                                       double s, const LoopConfig& cfg) {
    if (cfg.t_end <= 0.0) throw DomainError("integrate_closed_loop: t_end must be positive");
    const double dt = solver.config().dt;
    const double dx = solver.grid().dx;
    const double sqdx = std::sqrt(dx);
    const ModalSubspace* sub = solver.subspace();
    if (cfg.feedback != nullptr && sub == nullptr)
        throw DomainError("closed loop: feedback needs a modal subspace");
    const auto steps = static_cast<long long>(std::llround(cfg.t_end / dt));
    const int delay = delay_steps_for(cfg, dt);

    TrajectoryRecord rec;
    rec.start_time = s;
    rec.dt = dt;
    rec.t.reserve(static_cast<std::size_t>(steps) + 1);

    // The state is carried split into exact modal coefficients and the
    // orthogonal remainder, so |P_M y| is tracked without the projection
    // floor of re-measuring the assembled vector.
    KdvSolver::SplitState state = solver.split_state(solver.interior(y0));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(solver.interior_dim());
    const double e_start =
        dx * (state.w.squaredNorm() + (state.m.size() ? state.m.squaredNorm() : 0.0));
    // The a-priori envelope E(s) + C_B^2 (t-s) bounds any admissible swell;
    // the blow-up test is taken relative to it so that the feedback's
    // transient growth at small amplitudes is not misread as divergence.
    const double cb = (cfg.feedback != nullptr)
                          ? cfg.feedback->epsilon * cfg.feedback->library->v_sup
                          : 0.0;

    std::deque<Eigen::VectorXd> m_history;  // trailing modal coordinates
    if (sub) m_history.push_back(state.m);

    auto push_sample = [&](double t, const KdvSolver::SplitState& v, double ctrl) {
        rec.t.push_back(t);
        const double m2 = v.m.size() ? v.m.squaredNorm() : 0.0;
        const double e = dx * (v.w.squaredNorm() + m2);
        rec.energy_series.push_back(e);
        rec.norm_m.push_back(sqdx * std::sqrt(m2));
        rec.norm_h.push_back(sqdx * v.w.norm());
        rec.control.push_back(ctrl);
        if (cfg.store_states) rec.states.push_back(solver.from_interior(solver.assemble(v)));
    };

    for (long long n = 0; n < steps; ++n) {
        const double t = s + static_cast<double>(n) * dt;
        double h = 0.0;
        if (cfg.feedback != nullptr) {
            const Eigen::VectorXd& m_used =
                (cfg.mode == LoopMode::Delayed) ? m_history.front() : state.m;
            h = u_eps_modal(t, (sqdx * m_used).eval(), *cfg.feedback, *sub);
        }
        push_sample(t, state, h);
        try {
            if (cfg.disable_nonlinearity) {
                state = solver.step_split(state, h, zero, dt);
            } else {
                state = solver.step_nonlinear_split(state, h, zero, t);
            }
        } catch (const PicardDivergence&) {
            throw BlowUpError("closed loop: nonlinear solve stopped contracting", t);
        }
        const double e =
            dx * (state.w.squaredNorm() + (state.m.size() ? state.m.squaredNorm() : 0.0));
        const double cap = e_start + cb * cb * (t + dt - s) + 1e-280;
        if (e > cfg.blowup_factor * cap)
            throw BlowUpError("closed loop: energy passed the blow-up threshold",
                              t + dt);
        if (sub) {
            m_history.push_back(state.m);
            if (static_cast<int>(m_history.size()) > delay + 1) m_history.pop_front();
        }
    }
    push_sample(s + static_cast<double>(steps) * dt, state, 0.0);
    rec.final_state = solver.from_interior(solver.assemble(state));
    return rec;
}

CoupledResult coupled_integrate(const KdvSolver& solver, const StateVector& y0,
                                double s, const LoopConfig& cfg) {
    if (cfg.t_end <= 0.0) throw DomainError("coupled_integrate: t_end must be positive");
    const ModalSubspace* subp = solver.subspace();
    if (!subp) throw DomainError("coupled_integrate: solver has no modal subspace");
    const ModalSubspace& sub = *subp;
    const Eigen::MatrixXd& phi = sub.interior_basis();

    const double dt = solver.config().dt;
    const double sqdx = std::sqrt(solver.grid().dx);
    const auto steps = static_cast<long long>(std::llround(cfg.t_end / dt));
    const int delay = delay_steps_for(cfg, dt);
    const SolverConfig& scfg = solver.config();

    Eigen::VectorXd y = solver.interior(y0);
    Eigen::VectorXd y2 = phi * (phi.transpose() * y).eval();
    Eigen::VectorXd y1 = y - y2;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(y.size());
    const double e_start = solver.grid().dx * y.squaredNorm();
    const double cb = (cfg.feedback != nullptr)
                          ? cfg.feedback->epsilon * cfg.feedback->library->v_sup
                          : 0.0;

    std::deque<Eigen::VectorXd> history;
    history.push_back(y);

    TrajectoryRecord rec;
    rec.start_time = s;
    rec.dt = dt;

    auto push_sample = [&](double t, const Eigen::VectorXd& v, double ctrl) {
        rec.t.push_back(t);
        const double e = solver.grid().dx * v.squaredNorm();
        rec.energy_series.push_back(e);
        Eigen::VectorXd m = sqdx * sub.coefficients_interior(v);
        rec.norm_m.push_back(m.norm());
        rec.norm_h.push_back(std::sqrt(std::max(0.0, e - m.squaredNorm())));
        rec.control.push_back(ctrl);
        if (cfg.store_states) rec.states.push_back(solver.from_interior(v));
    };

    for (long long n = 0; n < steps; ++n) {
        const double t = s + static_cast<double>(n) * dt;
        double h = 0.0;
        if (cfg.feedback != nullptr) {
            const Eigen::VectorXd& basis_state =
                (cfg.mode == LoopMode::Delayed) ? history.front() : y;
            Eigen::VectorXd m = sqdx * sub.coefficients_interior(basis_state);
            h = u_eps_modal(t, m, *cfg.feedback, sub);
        }
        push_sample(t, y, h);

        // Joint fixed point of the projected pair; the channel sum follows the
        // same iteration as the unsplit solver.
        Eigen::VectorXd z1 = y1, z2 = y2;
        bool converged = false;
        for (int it = 0; it < scfg.picard_max_iter; ++it) {
            Eigen::VectorXd mid = 0.5 * ((y1 + z1) + (y2 + z2));
            Eigen::VectorXd quad = cfg.disable_nonlinearity ? zero : solver.nonlinear_term(mid);
            Eigen::VectorXd quad_m = phi * (phi.transpose() * quad).eval();
            Eigen::VectorXd quad_h = quad - quad_m;
            Eigen::VectorXd n1 = solver.step_interior(y1, h, (-quad_h).eval());
            Eigen::VectorXd n2 = solver.step_interior(y2, 0.0, (-quad_m).eval());
            const double err = (n1 - z1).norm() + (n2 - z2).norm();
            const double scale = std::max(n1.norm() + n2.norm(), 1e-290);
            z1 = n1;
            z2 = n2;
            if (err <= scfg.picard_tol * scale || cfg.disable_nonlinearity) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw BlowUpError("coupled loop: nonlinear solve stopped contracting", t);
        y1 = z1;
        y2 = z2;
        y = y1 + y2;
        const double e = solver.grid().dx * y.squaredNorm();
        const double cap = e_start + cb * cb * (t + dt - s) + 1e-280;
        if (e > cfg.blowup_factor * cap)
            throw BlowUpError("coupled loop: energy passed the blow-up threshold", t + dt);
        history.push_back(y);
        if (static_cast<int>(history.size()) > delay + 1) history.pop_front();
    }
    push_sample(s + static_cast<double>(steps) * dt, y, 0.0);
    rec.final_state = solver.from_interior(y);

    CoupledResult out{std::move(rec), solver.from_interior(y1), solver.from_interior(y2)};
    return out;
}

EnergyEnvelope EnergyEnvelope::dissipation_only() {
    EnergyEnvelope e;
    e.kind_ = Kind::Zero;
    return e;
}

EnergyEnvelope EnergyEnvelope::constant_bound(double c) {
    EnergyEnvelope e;
    e.kind_ = Kind::Constant;
    e.c_ = c;
    return e;
}

EnergyEnvelope EnergyEnvelope::from_bound(std::function<double(double)> c_of_r) {
    EnergyEnvelope e;
    e.kind_ = Kind::General;
    e.c_of_r_ = std::move(c_of_r);
    return e;
}

double EnergyEnvelope::h_value(double a) const {
    switch (kind_) {
        case Kind::Zero:
            return a;  // formally infinite slope inverse; handled in bound()
        case Kind::Constant:
            return a / (c_ * c_);
        case Kind::General:
            break;
    }
    // Composite Simpson on [0, a]; the integrand 1/C_B(sqrt(E))^2 is smooth
    // for the admissible bounds (C_B >= 1 on the range of interest).
    const int cells = 512;
    const double hstep = a / cells;
    auto f = [&](double e) {
        const double c = c_of_r_(std::sqrt(std::max(e, 0.0)));
        return 1.0 / (c * c);
    };
    double acc = 0.0;
    for (int i = 0; i < cells; ++i) {
        const double x0 = i * hstep, x1 = x0 + hstep;
        acc += (hstep / 6.0) * (f(x0) + 4.0 * f(0.5 * (x0 + x1)) + f(x1));
    }
    return acc;
}

double EnergyEnvelope::h_inverse(double v) const {
    switch (kind_) {
        case Kind::Zero:
            return v;
        case Kind::Constant:
            return v * c_ * c_;
        case Kind::General:
            break;
    }
    double lo = 0.0, hi = 1.0;
    while (h_value(hi) < v) {
        hi *= 2.0;
        if (hi > 1e12) throw DomainError("EnergyEnvelope: inverse out of range");
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (h_value(mid) < v)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double EnergyEnvelope::bound(double e_start, double elapsed) const {
    if (elapsed < 0.0) throw DomainError("EnergyEnvelope: negative elapsed time");
    switch (kind_) {
        case Kind::Zero:
            return e_start;
        case Kind::Constant:
            return e_start + c_ * c_ * elapsed;
        case Kind::General:
            return h_inverse(h_value(e_start) + elapsed);
    }
    return e_start;
}

EnvelopeReport energy_envelope_check(const TrajectoryRecord& record,
                                     const EnergyEnvelope& envelope, double tol) {
    EnvelopeReport rep;
    if (record.t.empty()) return rep;
    const double e0 = record.energy_series.front();
    const double t0 = record.t.front();
    for (std::size_t k = 0; k < record.t.size(); ++k) {
        const double cap = envelope.bound(e0, record.t[k] - t0);
        const double excess = record.energy_series[k] - cap - tol * (1.0 + e0);
        if (excess > 0.0) {
            rep.ok = false;
            ++rep.violations;
            rep.max_violation = std::max(rep.max_violation, excess);
        }
    }
    return rep;
}

double energy_budget_violation(const TrajectoryRecord& record) {
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < record.energy_series.size(); ++k) {
        const double du = record.energy_series[k + 1] - record.energy_series[k];
        const double budget = record.dt * record.control[k] * record.control[k];
        worst = std::max(worst, du - budget);
    }
    return worst;
}

}  // namespace kdvctrl
