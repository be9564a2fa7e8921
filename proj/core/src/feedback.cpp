#include "kdvctrl/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace kdvctrl {

bool SteeringLibrary::windows_disjoint() const {
    std::vector<std::pair<double, double>> spans;
    for (const PlaneLibrary& p : planes)
        for (double s : p.window_start) spans.emplace_back(s, s + p.span);
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
        if (spans[i].first < spans[i - 1].second - 1e-12) return false;
    return true;
}

SteeringLibrary build_steering_library(const KdvSolver& solver,
                                       const LibraryBuildOptions& opts) {
    const ModalSubspace* sub = solver.subspace();
    const LengthClassification cls = classify_length(solver.grid().length);
    if (cls.cls != LengthClass::N2 && cls.cls != LengthClass::N3)
        throw UnsupportedClassError(
            "build_steering_library: feedback construction needs a length in N2 or N3");
    if (!sub) throw DomainError("build_steering_library: solver has no modal subspace");

    const double dt = solver.config().dt;
    SteeringLibrary lib;
    lib.length = solver.grid().length;
    lib.node_count = solver.grid().node_count;
    lib.dt = dt;

    // Window spacing within a plane only matters modulo the plane's period,
    // so fast planes may be spaced by q + n*p to give the control a support
    // comparable to the slowest quarter period.
    double q_slowest = 0.0;
    for (const ModePair& m : sub->modes())
        q_slowest = std::max(q_slowest, m.pair.period / 4.0);

    long long cursor = 0;  // grid-aligned time, in steps
    for (int j = 0; j < sub->pair_count(); ++j) {
        const ModePair& mode = sub->modes()[static_cast<std::size_t>(j)];
        PlaneLibrary plane;
        plane.pair = mode.pair;
        plane.pair_index = j;
        plane.basis_offset = mode.basis_offset;
        plane.q_exact = mode.pair.period / 4.0;

        double spacing = plane.q_exact;
        while (spacing < q_slowest - 1e-12) spacing += mode.pair.period;
        const long long qsteps = std::llround(spacing / dt);
        const long long span_steps = qsteps - opts.window_gap_steps;
        if (span_steps < 8)
            throw SynthesisFailure("build_steering_library: step too coarse for this plane");
        const double spacing_snap = static_cast<double>(qsteps) * dt;
        plane.q_snap = spacing_snap - (spacing - plane.q_exact);
        plane.span = static_cast<double>(span_steps) * dt;

        SynthesisResult synth = find_u0(solver, j, plane.span, opts.synthesis);
        plane.kappa = synth.kappa;
        plane.scale = 1.0 / std::sqrt(synth.kappa);
        plane.u0 = synth.u0.scaled(plane.scale);

        SecondOrderResult drift = second_order_drift(solver, plane.u0);
        Eigen::Vector2d m0 = drift.m_component.segment(mode.basis_offset, 2);
        if (std::fabs(m0.norm() - 1.0) > 1e-6)
            throw SynthesisFailure("build_steering_library: target normalization drifted");
        m0.normalize();

        for (int i = 1; i <= 4; ++i)
            plane.window_start[static_cast<std::size_t>(i - 1)] =
                static_cast<double>(cursor + (4 - i) * qsteps) * dt;
        const long long block_end = cursor + 3 * qsteps + span_steps;
        cursor = block_end + opts.guard_steps;

        // Targets are filled once T is known; stash the base direction.
        plane.psi[0] = m0;
        lib.planes.push_back(std::move(plane));
    }
    cursor -= opts.guard_steps;
    lib.period = static_cast<double>(cursor) * dt;

    for (PlaneLibrary& plane : lib.planes) {
        const double omega = plane.pair.omega;
        const Eigen::Vector2d m0 = plane.psi[0];
        for (int i = 1; i <= 4; ++i) {
            const double end = plane.window_start[static_cast<std::size_t>(i - 1)] + plane.span;
            const double th = omega * (lib.period - end);
            Eigen::Matrix2d rot;
            rot << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
            plane.psi[static_cast<std::size_t>(i - 1)] = rot * m0;
        }
    }
    if (!lib.windows_disjoint())
        throw SynthesisFailure("build_steering_library: window schedule overlaps");

    DeltaReport report = estimate_delta(solver, lib, opts.delta_samples, opts.sample_seed);
    lib.delta = report.delta;
    lib.delta_samples = report.samples;

    // Measured regularity of v: Lipschitz constant in z and the sup norm.
    std::mt19937 rng(opts.sample_seed + 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int dim = sub->dim();
    auto random_unit = [&]() {
        Eigen::VectorXd z(dim);
        for (int i = 0; i < dim; ++i) z[i] = gauss(rng);
        z.normalize();
        return z;
    };
    double c0 = 0.0, vsup = 0.0;
    const int tsamples = 512;
    for (int s = 0; s < opts.lipschitz_samples; ++s) {
        Eigen::VectorXd za = random_unit(), zb = random_unit();
        const double dz = (za - zb).norm();
        if (dz < 1e-12) continue;
        for (int k = 0; k < tsamples; ++k) {
            const double t = (static_cast<double>(k) + 0.5) / tsamples * lib.period;
            const double va = v_eval(t, za, lib, *sub);
            const double vb = v_eval(t, zb, lib, *sub);
            vsup = std::max({vsup, std::fabs(va), std::fabs(vb)});
            c0 = std::max(c0, std::fabs(va - vb) / dz);
        }
    }
    lib.lipschitz_c0 = c0;
    lib.v_sup = vsup;
    return lib;
}

Eigen::VectorXd decompose_on_targets(const Eigen::VectorXd& z_modal,
                                     const SteeringLibrary& lib,
                                     const ModalSubspace& sub) {
    if (z_modal.size() != sub.dim())
        throw DimensionError("decompose_on_targets: coordinate size");
    if (std::fabs(z_modal.norm() - 1.0) > 1e-8)
        throw DomainError("decompose_on_targets: z must have unit norm");
    Eigen::VectorXd minus_stz = -sub.rotate_coefficients(z_modal, lib.period);
    Eigen::VectorXd alphas = Eigen::VectorXd::Zero(4 * lib.plane_count());
    for (int j = 0; j < lib.plane_count(); ++j) {
        const PlaneLibrary& plane = lib.planes[static_cast<std::size_t>(j)];
        Eigen::Vector2d w(minus_stz[plane.basis_offset], minus_stz[plane.basis_offset + 1]);
        const double a = w.dot(plane.psi[0]);
        const double b = w.dot(plane.psi[1]);
        alphas[4 * j + 0] = std::max(a, 0.0);
        alphas[4 * j + 2] = std::max(-a, 0.0);
        alphas[4 * j + 1] = std::max(b, 0.0);
        alphas[4 * j + 3] = std::max(-b, 0.0);
    }
    return alphas;
}

double v_eval(double t, const Eigen::VectorXd& z_modal, const SteeringLibrary& lib,
              const ModalSubspace& sub) {
    if (t < 0.0 || t > lib.period) throw DomainError("v_eval: t outside [0, T]");
    Eigen::VectorXd alphas = decompose_on_targets(z_modal, lib, sub);
    double value = 0.0;
    for (int j = 0; j < lib.plane_count(); ++j) {
        const PlaneLibrary& plane = lib.planes[static_cast<std::size_t>(j)];
        const double tol = 1e-9 * lib.dt;
        for (int i = 0; i < 4; ++i) {
            const double a = alphas[4 * j + i];
            if (a == 0.0) continue;
            const double local = t - plane.window_start[static_cast<std::size_t>(i)];
            if (local < -tol || local >= plane.span - tol) continue;
            value += a * plane.u0.value_at(local);
        }
    }
    return value;
}

DeltaReport estimate_delta(const KdvSolver& solver, const SteeringLibrary& lib,
                           int n_samples, unsigned seed) {
    const ModalSubspace* subp = solver.subspace();
    if (!subp) throw DomainError("estimate_delta: solver has no modal subspace");
    const ModalSubspace& sub = *subp;
    const double dt = solver.config().dt;
    const auto steps = static_cast<long long>(std::llround(lib.period / dt));
    const int ni = solver.interior_dim();
    const Eigen::MatrixXd& phi = sub.interior_basis();
    const double sqdx = std::sqrt(solver.grid().dx);

    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    DeltaReport rep;
    rep.samples = n_samples;
    rep.min_inner = std::numeric_limits<double>::infinity();

    for (int s = 0; s < n_samples; ++s) {
        Eigen::VectorXd z(sub.dim());
        for (int i = 0; i < sub.dim(); ++i) z[i] = gauss(rng);
        z.normalize();
        Eigen::VectorXd alphas = decompose_on_targets(z, lib, sub);

        Eigen::VectorXd y1 = Eigen::VectorXd::Zero(ni);
        Eigen::VectorXd y2 = Eigen::VectorXd::Zero(ni);
        const Eigen::VectorXd zero = y1;
        for (long long n = 0; n < steps; ++n) {
            const double t = static_cast<double>(n) * dt;
            const double h = v_eval(t, z, lib, sub);
            Eigen::VectorXd next = solver.step_interior(y1, h, zero);
            Eigen::VectorXd mid = 0.5 * (y1 + next);
            Eigen::VectorXd quad = solver.nonlinear_term(mid);
            Eigen::VectorXd quad_m = phi * (phi.transpose() * quad).eval();
            y2 = solver.step_interior(y2, 0.0, (-quad_m).eval());
            y1 = next;
        }

        const double y1_norm = sqdx * y1.norm();
        rep.max_y1_terminal = std::max(rep.max_y1_terminal, y1_norm);

        Eigen::VectorXd y2_modal = sqdx * (phi.transpose() * y2);
        Eigen::VectorXd stz = sub.rotate_coefficients(z, lib.period);
        const double inner = y2_modal.dot(stz);
        rep.min_inner = std::min(rep.min_inner, -inner);

        Eigen::VectorXd predicted = Eigen::VectorXd::Zero(sub.dim());
        for (int j = 0; j < lib.plane_count(); ++j) {
            const PlaneLibrary& plane = lib.planes[static_cast<std::size_t>(j)];
            for (int i = 0; i < 4; ++i) {
                const double a = alphas[4 * j + i];
                predicted[plane.basis_offset] += a * a * plane.psi[static_cast<std::size_t>(i)][0];
                predicted[plane.basis_offset + 1] +=
                    a * a * plane.psi[static_cast<std::size_t>(i)][1];
            }
        }
        rep.max_y2_mismatch = std::max(rep.max_y2_mismatch, (y2_modal - predicted).norm());
    }
    if (rep.min_inner <= 0.0)
        throw LibraryInvalidError("estimate_delta: a sampled direction has a nonnegative "
                                  "terminal alignment");
    rep.delta = 0.5 * rep.min_inner;
    return rep;
}

double u_eps_modal(double t, const Eigen::VectorXd& m_coords, const FeedbackParams& params,
                   const ModalSubspace& sub) {
    params.validate();
    const SteeringLibrary& lib = *params.library;
    const double nm = m_coords.norm();
    if (nm == 0.0) return 0.0;
    double tm = t - std::floor(t / lib.period) * lib.period;
    if (tm >= lib.period) tm = 0.0;  // half-open wrap of the period
    Eigen::VectorXd z = sub.rotate_coefficients(m_coords / nm, -tm);
    const double value = v_eval(tm, z, lib, sub);
    const double gain = (nm > 1.0) ? params.epsilon : params.epsilon * std::sqrt(nm);
    return gain * value;
}

double u_eps(double t, const StateVector& y, const FeedbackParams& params,
             const ModalSubspace& sub) {
    Eigen::VectorXd m = std::sqrt(y.grid().dx) * sub.coefficients(y);
    return u_eps_modal(t, m, params, sub);
}

}  // namespace kdvctrl
