#include "kdvctrl/control.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <random>

namespace kdvctrl {

namespace {
constexpr double kPi = std::numbers::pi;

void require_same_step(const ControlSignal& u, const KdvSolver& solver) {
    if (std::fabs(u.dt - solver.config().dt) > 1e-12 * solver.config().dt)
        throw DimensionError("control signal step does not match the solver step");
}
}  // namespace

ControlSignal ControlSignal::zero(double t0, double t1, double dt) {
    ControlSignal u;
    u.t0 = t0;
    u.t1 = t1;
    u.dt = dt;
    u.support0 = t0;
    u.support1 = t1;
    u.samples.assign(static_cast<std::size_t>(std::llround((t1 - t0) / dt)), 0.0);
    return u;
}

double ControlSignal::value_at(double t) const {
    // Cell boundaries are resolved with a small forward bias so that values
    // sampled exactly at grid times land in the cell they start.
    const double tol = 1e-9 * dt;
    if (t < t0 - tol || t >= t1 - tol) return 0.0;
    if (t < support0 - tol || t >= support1 - tol) return 0.0;
    const auto idx = static_cast<long long>(std::floor((t - t0) / dt + 1e-9));
    if (idx < 0 || idx >= static_cast<long long>(samples.size())) return 0.0;
    return samples[static_cast<std::size_t>(idx)];
}

double ControlSignal::l2_norm() const {
    double s = 0.0;
    for (double v : samples) s += v * v;
    return std::sqrt(dt * s);
}

double ControlSignal::sup_norm() const {
    double s = 0.0;
    for (double v : samples) s = std::max(s, std::fabs(v));
    return s;
}

ControlSignal ControlSignal::scaled(double a) const {
    ControlSignal u = *this;
    for (double& v : u.samples) v *= a;
    return u;
}

LinearPropagator::LinearPropagator(const KdvSolver& solver, int steps)
    : solver_(&solver), steps_(steps) {
    if (steps < 1) throw DomainError("LinearPropagator: need at least one step");
    const int ni = solver.interior_dim();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(ni);
    c_.resize(ni, ni);
    f_.resize(ni, ni);
    for (int i = 0; i < ni; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(ni);
        e[i] = 1.0;
        c_.col(i) = solver.step_interior(e, 0.0, zero);
        f_.col(i) = solver.step_interior(zero, 0.0, e);
    }
    d_ = solver.step_interior(zero, 1.0, zero);
    e_.resize(ni, steps);
    Eigen::VectorXd w = d_;
    for (int n = steps - 1; n >= 0; --n) {
        e_.col(n) = w;
        if (n > 0) w = c_ * w;
    }
}

Eigen::VectorXd LinearPropagator::evolve(const Eigen::VectorXd& u0,
                                         const std::vector<double>& controls) const {
    Eigen::VectorXd u = u0;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(u0.size());
    for (int n = 0; n < steps_; ++n) {
        const double h = (n < static_cast<int>(controls.size())) ? controls[n] : 0.0;
        u = solver_->step_interior(u, h, zero);
    }
    return u;
}

ControlSignal steer_linear(const KdvSolver& solver, const StateVector& y0,
                           const StateVector& y1, double horizon,
                           const SteeringOptions& opts) {
    if (horizon <= 0.0) throw DomainError("steer_linear: horizon must be positive");
    const ModalSubspace* sub = solver.subspace();
    if (sub) {
        const double s0 = sub->norm_m(y0), s1 = sub->norm_m(y1);
        if (s0 > opts.h_tolerance * std::max(norm_l2(y0), 1.0) ||
            s1 > opts.h_tolerance * std::max(norm_l2(y1), 1.0))
            throw DomainError("steer_linear: endpoints must lie in H");
    }
    const double dt = solver.config().dt;
    const int steps = std::max(1, static_cast<int>(std::llround(horizon / dt)));
    LinearPropagator prop(solver, steps);

    Eigen::VectorXd drift = prop.evolve(solver.interior(y0), {});
    Eigen::VectorXd b = solver.interior(y1) - drift;

    const int pdim = (opts.param_dim > 0 && opts.param_dim < steps) ? opts.param_dim : steps;
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(steps, pdim);
    for (int n = 0; n < steps; ++n) {
        const int blk = std::min(pdim - 1, static_cast<int>((static_cast<long long>(n) * pdim) / steps));
        basis(n, blk) = 1.0;
    }
    Eigen::MatrixXd ep = prop.endpoint() * basis;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(ep, Eigen::ComputeThinU | Eigen::ComputeThinV);

    auto solve_damped = [&](const Eigen::VectorXd& rhs) {
        Eigen::VectorXd proj = svd.matrixU().transpose() * rhs;
        const auto& sig = svd.singularValues();
        Eigen::VectorXd coef(sig.size());
        for (int i = 0; i < sig.size(); ++i)
            coef[i] = sig[i] * proj[i] / (sig[i] * sig[i] + opts.tikhonov);
        return (svd.matrixV() * coef).eval();
    };

    Eigen::VectorXd c = solve_damped(b);
    Eigen::VectorXd u = basis * c;
    for (int pass = 0; pass < opts.refine_passes; ++pass) {
        Eigen::VectorXd r = b - prop.endpoint() * u;
        c += solve_damped(r);
        u = basis * c;
    }

    const double dx = solver.grid().dx;
    const double resid = std::sqrt(dx) * (prop.endpoint() * u - b).norm();
    const double budget = 1e-6 * (norm_l2(y0) + norm_l2(y1) + 1.0);
    if (resid > budget && opts.strict)
        throw IllPosedTargetError("steer_linear: terminal residual above tolerance");

    ControlSignal sig = ControlSignal::zero(0.0, steps * dt, dt);
    for (int n = 0; n < steps; ++n) sig.samples[static_cast<std::size_t>(n)] = u[n];
    return sig;
}

SecondOrderResult second_order_drift(const KdvSolver& solver, const ControlSignal& u) {
    require_same_step(u, solver);
    const ModalSubspace* sub = solver.subspace();
    if (!sub) throw DomainError("second_order_drift: solver has no modal subspace");
    const int ni = solver.interior_dim();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(ni);
    Eigen::VectorXd alpha = zero, beta = zero;
    const int steps = u.cells();
    for (int n = 0; n < steps; ++n) {
        Eigen::VectorXd next = solver.step_interior(alpha, u.samples[static_cast<std::size_t>(n)], zero);
        Eigen::VectorXd mid = 0.5 * (alpha + next);
        beta = solver.step_interior(beta, 0.0, (-solver.nonlinear_term(mid)).eval());
        alpha = next;
    }
    SecondOrderResult r{solver.from_interior(alpha), solver.from_interior(beta),
                        Eigen::VectorXd()};
    r.m_component = std::sqrt(solver.grid().dx) * sub->coefficients_interior(beta);
    return r;
}

namespace {

// Adjoint of the linearized skew-split quadratic term.
Eigen::VectorXd quad_adjoint(const KdvSolver& solver, const Eigen::VectorXd& a,
                             const Eigen::VectorXd& w) {
    Eigen::VectorXd ga = solver.d1_apply(a);
    Eigen::VectorXd gaw = solver.d1_apply(a.cwiseProduct(w));
    Eigen::VectorXd gw = solver.d1_apply(w);
    return (ga.cwiseProduct(w) - gaw - 2.0 * a.cwiseProduct(gw)) / 3.0;
}

struct CascadeObjective {
    const LinearPropagator* prop;
    const KdvSolver* solver;
    Eigen::MatrixXd znull;                 // steps x null_dim
    std::vector<Eigen::MatrixXd> zrows;    // per step, 2 x ni
    int steps = 0;

    // Returns |m|^2 and optionally its gradient with respect to w.
    double eval(const Eigen::VectorXd& w, Eigen::VectorXd* grad) const {
        const int ni = prop->solver().interior_dim();
        Eigen::VectorXd u = znull * w;
        std::vector<Eigen::VectorXd> mids(static_cast<std::size_t>(steps));
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(ni);
        Eigen::Vector2d m = Eigen::Vector2d::Zero();
        for (int n = 0; n < steps; ++n) {
            Eigen::VectorXd next = prop->step_matrix() * alpha + u[n] * prop->control_column();
            mids[static_cast<std::size_t>(n)] = 0.5 * (alpha + next);
            m -= zrows[static_cast<std::size_t>(n)] *
                 solver->nonlinear_term(mids[static_cast<std::size_t>(n)]);
            alpha = next;
        }
        const double f = m.squaredNorm();
        if (!grad) return f;

        std::vector<Eigen::VectorXd> q(static_cast<std::size_t>(steps));
        for (int n = 0; n < steps; ++n) {
            Eigen::VectorXd weight = zrows[static_cast<std::size_t>(n)].transpose() * m;
            q[static_cast<std::size_t>(n)] =
                -2.0 * quad_adjoint(*solver, mids[static_cast<std::size_t>(n)], weight);
        }
        Eigen::VectorXd grad_u(steps);
        Eigen::VectorXd lambda = 0.5 * q[static_cast<std::size_t>(steps - 1)];
        grad_u[steps - 1] = prop->control_column().dot(lambda);
        for (int n = steps - 1; n >= 1; --n) {
            lambda = prop->step_matrix().transpose() * lambda +
                     0.5 * (q[static_cast<std::size_t>(n)] + q[static_cast<std::size_t>(n - 1)]);
            grad_u[n - 1] = prop->control_column().dot(lambda);
        }
        *grad = znull.transpose() * grad_u;
        return f;
    }
};

}  // namespace

SynthesisResult find_u0(const KdvSolver& solver, int pair_index, double t0,
                        const SynthesisOptions& opts) {
    const ModalSubspace* sub = solver.subspace();
    if (!sub) throw DomainError("find_u0: solver has no modal subspace");
    if (pair_index < 0 || pair_index >= sub->pair_count())
        throw DomainError("find_u0: pair index out of range");
    const ModePair& mode = sub->modes()[static_cast<std::size_t>(pair_index)];
    if (mode.basis_count != 2)
        throw DomainError("find_u0: degenerate pair has no rotating plane");
    if (t0 <= 0.0) throw DomainError("find_u0: horizon must be positive");

    const double dt = solver.config().dt;
    const double dx = solver.grid().dx;
    const int steps = std::max(2, static_cast<int>(std::llround(t0 / dt)));
    LinearPropagator prop(solver, steps);

    // Null directions of the endpoint map: controls with a vanishing
    // first-order terminal state.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(prop.endpoint(), Eigen::ComputeThinU | Eigen::ComputeFullV);
    const double cap = (opts.null_tol_abs > 0.0) ? opts.null_tol_abs
                                                 : 1e-7 * std::sqrt(dt / dx);
    const auto& sig = svd.singularValues();
    std::vector<int> keep;
    for (int i = 0; i < svd.matrixV().cols(); ++i) {
        const double s = (i < sig.size()) ? sig[i] : 0.0;
        if (s <= cap) keep.push_back(i);
    }
    if (static_cast<int>(keep.size()) < opts.min_null_dim)
        throw SynthesisFailure(
            "find_u0: endpoint map leaves too few null directions; "
            "horizon too short or grid too coarse");
    Eigen::MatrixXd znull(steps, static_cast<int>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) znull.col(static_cast<int>(c)) = svd.matrixV().col(keep[c]);

    CascadeObjective obj;
    obj.prop = &prop;
    obj.solver = &solver;
    obj.znull = znull;
    obj.steps = steps;
    obj.zrows.resize(static_cast<std::size_t>(steps));
    {
        const int dim = sub->dim();
        Eigen::MatrixXd rows(2, solver.interior_dim());
        rows.row(0) = sub->interior_basis().col(mode.basis_offset).transpose();
        rows.row(1) = sub->interior_basis().col(mode.basis_offset + 1).transpose();
        (void)dim;
        // zrows[n] = rows * C^(steps-1-n) * F
        Eigen::MatrixXd running = rows;  // rows * C^m
        for (int n = steps - 1; n >= 0; --n) {
            obj.zrows[static_cast<std::size_t>(n)] = running * prop.forcing_matrix();
            if (n > 0) running = running * prop.step_matrix();
        }
    }

    std::mt19937 rng(opts.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int ndim = static_cast<int>(znull.cols());

    Eigen::VectorXd best_w;
    double best_f = -1.0;
    for (int s = 0; s < opts.starts; ++s) {
        Eigen::VectorXd w(ndim);
        for (int i = 0; i < ndim; ++i) w[i] = gauss(rng);
        w.normalize();
        Eigen::VectorXd grad(ndim);
        double f = obj.eval(w, &grad);
        double step = 1.0;
        for (int it = 0; it < opts.max_iterations; ++it) {
            Eigen::VectorXd tang = grad - grad.dot(w) * w;
            const double gn = tang.norm();
            if (gn < 1e-14 * std::max(f, 1e-30)) break;
            bool advanced = false;
            for (int bt = 0; bt < 30; ++bt) {
                Eigen::VectorXd cand = (w + (step / gn) * tang).normalized();
                Eigen::VectorXd gcand(ndim);
                const double fc = obj.eval(cand, &gcand);
                if (fc > f) {
                    w = cand;
                    f = fc;
                    grad = gcand;
                    step *= 1.4;
                    advanced = true;
                    break;
                }
                step *= 0.5;
            }
            if (!advanced) break;
        }
        if (f > best_f) {
            best_f = f;
            best_w = w;
        }
    }

    SynthesisResult result;
    result.pair_index = pair_index;
    result.null_dim = ndim;
    result.u0 = ControlSignal::zero(0.0, steps * dt, dt);
    Eigen::VectorXd u = (znull * best_w) / std::sqrt(dt);  // unit L2 norm
    for (int n = 0; n < steps; ++n) result.u0.samples[static_cast<std::size_t>(n)] = u[n];

    SecondOrderResult drift = second_order_drift(solver, result.u0);
    result.alpha_residual = norm_l2(drift.alpha_t);
    result.kappa = drift.m_component.segment(mode.basis_offset, 2).norm();
    if (result.kappa < opts.kappa_min)
        throw SynthesisFailure("find_u0: second-order drift below kappa_min; "
                               "horizon too short or grid too coarse");
    return result;
}

NormalizedControl normalize_u0_to_target(const KdvSolver& solver,
                                         const SynthesisResult& synthesis) {
    const ModalSubspace* sub = solver.subspace();
    if (!sub) throw DomainError("normalize_u0_to_target: solver has no modal subspace");
    const ModePair& mode = sub->modes()[static_cast<std::size_t>(synthesis.pair_index)];

    SecondOrderResult drift = second_order_drift(solver, synthesis.u0);
    Eigen::Vector2d mj = drift.m_component.segment(mode.basis_offset, 2);
    const double c = mj.norm();
    if (c < 1e-12) throw DegenerateTargetError("normalize_u0_to_target: target is degenerate");

    NormalizedControl out;
    out.scale = 1.0 / std::sqrt(c);
    out.u0 = synthesis.u0.scaled(out.scale);

    const double theta0 = std::atan2(mj[1], mj[0]);
    const double omega = mode.pair.omega;
    double wait = 0.0;
    if (std::fabs(theta0) > 1e-15 && omega > 0.0) {
        wait = std::fmod(2.0 * kPi - theta0, 2.0 * kPi) / omega;
        if (wait < 0.0) wait += 2.0 * kPi / omega;
    }
    out.wait = wait;
    out.t_total = out.u0.t1 + wait;
    out.u0.t1 = out.t_total;  // zero tail, support stays on the active part

    const double th = theta0 + omega * wait;
    out.target = Eigen::Vector2d(std::cos(th), std::sin(th));
    return out;
}

ControlSignal smooth_in_null_space(const ControlSignal& u, const Eigen::MatrixXd& null_basis,
                                   int passes) {
    const int n = u.cells();
    if (null_basis.rows() != n) throw DimensionError("smooth_in_null_space: basis size");
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = u.samples[static_cast<std::size_t>(i)];
    const double norm0 = v.norm();
    for (int p = 0; p < passes; ++p) {
        Eigen::VectorXd s(n);
        for (int i = 0; i < n; ++i) {
            const double a = (i > 0) ? v[i - 1] : 0.0;
            const double b = (i + 1 < n) ? v[i + 1] : 0.0;
            s[i] = 0.25 * a + 0.5 * v[i] + 0.25 * b;
        }
        v = null_basis * (null_basis.transpose() * s);
    }
    if (v.norm() > 0.0) v *= norm0 / v.norm();
    ControlSignal out = u;
    for (int i = 0; i < n; ++i) out.samples[static_cast<std::size_t>(i)] = v[i];
    return out;
}

}  // namespace kdvctrl
