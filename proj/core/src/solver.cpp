#include "kdvctrl/solver.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace kdvctrl {

namespace {

// Central first difference on interior nodes, zero Dirichlet ends.
Eigen::MatrixXd first_difference(int ni, double dx) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(ni, ni);
    const double c = 1.0 / (2.0 * dx);
    for (int j = 0; j < ni; ++j) {
        if (j + 1 < ni) d(j, j + 1) = c;
        if (j - 1 >= 0) d(j, j - 1) = -c;
    }
    return d;
}

// Central third difference with odd-reflection ghost at the left end and the
// slope ghost u_N = u_{N-2} + 2 dx h at the right end (operator part only).
Eigen::MatrixXd third_difference(int ni, double dx) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(ni, ni);
    const double c = 1.0 / (2.0 * dx * dx * dx);
    for (int j = 0; j < ni; ++j) {
        // stencil (u_{i+2} - 2u_{i+1} + 2u_{i-1} - u_{i-2}) / (2 dx^3)
        if (j + 2 < ni) d(j, j + 2) += c;
        if (j + 1 < ni) d(j, j + 1) += -2.0 * c;
        if (j - 1 >= 0) d(j, j - 1) += 2.0 * c;
        if (j - 2 >= 0) d(j, j - 2) += -c;
    }
    d(0, 0) += c;           // ghost u_{-1} = -u_1
    d(ni - 1, ni - 1) += c; // ghost u_N, state part
    return d;
}

}  // namespace

KdvSolver::KdvSolver(const SpatialGrid& grid, const SolverConfig& cfg,
                     std::shared_ptr<const ModalSubspace> subspace)
    : grid_(grid), cfg_(cfg), subspace_(std::move(subspace)) {
    cfg_.validate();
    const int ni = grid_.interior_count();
    const double dx = grid_.dx;

    Eigen::MatrixXd a0 = -(first_difference(ni, dx) + third_difference(ni, dx));

    vl_ = Eigen::VectorXd::Zero(ni);
    vr_ = Eigen::VectorXd::Zero(ni);
    vl_[0] = 1.0 / dx;
    vr_[ni - 1] = 1.0 / dx;

    // dx*A0 must be antisymmetric after removing the boundary quadratic forms.
    Eigen::MatrixXd k = dx * a0 + 0.5 * (vl_ * vl_.transpose() + vr_ * vr_.transpose());
    const double skew_defect = (k + k.transpose()).cwiseAbs().maxCoeff();
    if (skew_defect > 1e-9 / (dx * dx))
        throw SolverFailure("KdvSolver: core operator lost antisymmetry");
    k = 0.5 * (k - k.transpose()).eval();

    if (subspace_) {
        if (!(subspace_->grid() == grid_))
            throw DimensionError("KdvSolver: subspace grid mismatch");
        const Eigen::MatrixXd& phi = subspace_->interior_basis();
        const int dim = static_cast<int>(phi.cols());

        // Rotation generator of the free flow restricted to M, in basis order.
        Eigen::MatrixXd targets(ni, dim);
        targets.setZero();
        for (const ModePair& m : subspace_->modes()) {
            if (m.basis_count == 2) {
                const double w = m.pair.omega;
                targets.col(m.basis_offset) = dx * w * phi.col(m.basis_offset + 1);
                targets.col(m.basis_offset + 1) = -dx * w * phi.col(m.basis_offset);
            }
        }

        // Antisymmetric correction pinning the sampled modes as exact
        // invariant planes of the core.
        Eigen::MatrixXd resid = targets - k * phi;
        Eigen::MatrixXd gamma = phi.transpose() * resid;
        gamma = (0.5 * (gamma - gamma.transpose())).eval();
        Eigen::MatrixXd rho = resid - phi * (phi.transpose() * resid);
        k += rho * phi.transpose() - phi * rho.transpose() + phi * gamma * phi.transpose();

        // Boundary functionals must not see M, so that the modes neither
        // dissipate nor feel the control.
        vl_ -= phi * (phi.transpose() * vl_).eval();
        vr_ -= phi * (phi.transpose() * vr_).eval();
        k = 0.5 * (k - k.transpose()).eval();

        const Eigen::MatrixXd check = k * phi - targets;
        if (check.cwiseAbs().maxCoeff() > 1e-8)
            throw SolverFailure("KdvSolver: modal pinning failed verification");
        phi_ = phi;
    }

    a_ = (k - 0.5 * (vl_ * vl_.transpose() + vr_ * vr_.transpose())) / dx;
    g_ = -vr_ / dx;
}

KdvSolver KdvSolver::make(double length, int node_count, const SolverConfig& cfg) {
    SpatialGrid grid = SpatialGrid::make(length, node_count);
    std::shared_ptr<const ModalSubspace> sub;
    if (classify_length(length).cls != LengthClass::C)
        sub = std::make_shared<const ModalSubspace>(ModalSubspace::build(length, grid));
    return KdvSolver(grid, cfg, std::move(sub));
}

const KdvSolver::Factorization& KdvSolver::factor_for(double dt) const {
    std::lock_guard<std::mutex> lock(*cache_mutex_);
    for (const auto& f : cache_)
        if (f->dt == dt) return *f;
    auto f = std::make_unique<Factorization>();
    f->dt = dt;
    const int ni = grid_.interior_count();
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(ni, ni);
    f->lu.compute(id - cfg_.theta * dt * a_);
    f->explicit_part = id + (1.0 - cfg_.theta) * dt * a_;
    if (subspace_) {
        for (const ModePair& m : subspace_->modes()) {
            PairBlock b;
            b.offset = m.basis_offset;
            b.count = m.basis_count;
            Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
            if (m.basis_count == 2) {
                w(0, 1) = -m.pair.omega;
                w(1, 0) = m.pair.omega;
            }
            Eigen::Matrix2d lhs = Eigen::Matrix2d::Identity() - cfg_.theta * dt * w;
            Eigen::Matrix2d inv = lhs.inverse();
            b.step = inv * (Eigen::Matrix2d::Identity() + (1.0 - cfg_.theta) * dt * w);
            b.forcing = inv * dt;
            f->blocks.push_back(b);
        }
    }
    cache_.push_back(std::move(f));
    return *cache_.back();
}

Eigen::VectorXd KdvSolver::interior(const StateVector& s) const {
    if (!(s.grid() == grid_)) throw DimensionError("KdvSolver: grid mismatch");
    const int ni = grid_.interior_count();
    Eigen::VectorXd u(ni);
    for (int i = 0; i < ni; ++i) u[i] = s[i + 1];
    return u;
}

StateVector KdvSolver::from_interior(const Eigen::VectorXd& u) const {
    if (u.size() != grid_.interior_count())
        throw DimensionError("KdvSolver: interior size mismatch");
    StateVector s(grid_);
    for (int i = 0; i < u.size(); ++i) s.at_interior(i + 1) = u[i];
    return s;
}

KdvSolver::SplitState KdvSolver::split_state(const Eigen::VectorXd& u) const {
    SplitState s;
    if (!subspace_) {
        s.w = u;
        return s;
    }
    s.m = phi_.transpose() * u;
    s.w = u - phi_ * s.m;
    // Second pass removes the rounding-level modal residue of the first.
    Eigen::VectorXd leak = phi_.transpose() * s.w;
    s.m += leak;
    s.w -= phi_ * leak;
    return s;
}

Eigen::VectorXd KdvSolver::assemble(const SplitState& s) const {
    if (!subspace_) return s.w;
    return phi_ * s.m + s.w;
}

KdvSolver::SplitState KdvSolver::step_split(const SplitState& s, double h,
                                            const Eigen::VectorXd& f_full, double dt) const {
    const Factorization& fac = factor_for(dt);
    SplitState out;
    if (!subspace_) {
        out.w = fac.lu.solve(fac.explicit_part * s.w + dt * (h * g_ + f_full));
        return out;
    }
    // Mode coefficients rotate exactly; the orthogonal remainder takes the
    // theta step and is re-projected to remove numerical leakage.
    Eigen::VectorXd fm = phi_.transpose() * f_full;
    Eigen::VectorXd fw = f_full - phi_ * fm;
    out.w = fac.lu.solve(fac.explicit_part * s.w + dt * (h * g_ + fw));
    out.w -= phi_ * (phi_.transpose() * out.w).eval();
    out.m.resize(s.m.size());
    for (const PairBlock& b : fac.blocks) {
        if (b.count == 2) {
            Eigen::Vector2d mc(s.m[b.offset], s.m[b.offset + 1]);
            Eigen::Vector2d fc(fm[b.offset], fm[b.offset + 1]);
            Eigen::Vector2d next = b.step * mc + b.forcing * fc;
            out.m[b.offset] = next[0];
            out.m[b.offset + 1] = next[1];
        } else {
            out.m[b.offset] = s.m[b.offset] + dt * fm[b.offset];
        }
    }
    return out;
}

Eigen::VectorXd KdvSolver::step_interior(const Eigen::VectorXd& u, double h,
                                         const Eigen::VectorXd& f, double dt) const {
    if (!subspace_) {
        const Factorization& fac = factor_for(dt);
        Eigen::VectorXd rhs = fac.explicit_part * u + dt * (h * g_ + f);
        return fac.lu.solve(rhs);
    }
    return assemble(step_split(split_state(u), h, f, dt));
}

Eigen::VectorXd KdvSolver::step_interior(const Eigen::VectorXd& u, double h,
                                         const Eigen::VectorXd& f) const {
    return step_interior(u, h, f, cfg_.dt);
}

StateVector KdvSolver::step_linear(const StateVector& state, double h,
                                   const StateVector& forcing) const {
    state.check_same_grid(forcing);
    return from_interior(step_interior(interior(state), h, interior(forcing)));
}

StateVector KdvSolver::semigroup_apply(const StateVector& y0, double t) const {
    if (t < 0.0) throw DomainError("semigroup_apply: t must be nonnegative");
    Eigen::VectorXd u = interior(y0);
    if (t == 0.0) return from_interior(u);
    const double dt = cfg_.dt;
    const auto nsteps = static_cast<long long>(std::floor(t / dt + 1e-12));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(u.size());
    for (long long s = 0; s < nsteps; ++s) u = step_interior(u, 0.0, zero, dt);
    const double rem = t - static_cast<double>(nsteps) * dt;
    if (rem > 1e-12 * dt) u = step_interior(u, 0.0, zero, rem);
    return from_interior(u);
}

Eigen::VectorXd KdvSolver::d1_apply(const Eigen::VectorXd& u) const {
    const int ni = static_cast<int>(u.size());
    const double c = 1.0 / (2.0 * grid_.dx);
    Eigen::VectorXd out(ni);
    for (int j = 0; j < ni; ++j) {
        const double right = (j + 1 < ni) ? u[j + 1] : 0.0;
        const double left = (j - 1 >= 0) ? u[j - 1] : 0.0;
        out[j] = c * (right - left);
    }
    return out;
}

Eigen::VectorXd KdvSolver::nonlinear_term(const Eigen::VectorXd& u) const {
    Eigen::VectorXd du = d1_apply(u);
    Eigen::VectorXd dsq = d1_apply(u.cwiseProduct(u));
    return (u.cwiseProduct(du) + dsq) / 3.0;
}

KdvSolver::SplitState KdvSolver::step_nonlinear_split(const SplitState& s, double h,
                                                      const Eigen::VectorXd& f_full,
                                                      double time_hint) const {
    const double dt = cfg_.dt;
    const Eigen::VectorXd base = assemble(s);
    SplitState z = s;
    for (int it = 0; it < cfg_.picard_max_iter; ++it) {
        Eigen::VectorXd mid = 0.5 * (base + assemble(z));
        Eigen::VectorXd rhs_f = f_full - nonlinear_term(mid);
        SplitState znew = step_split(s, h, rhs_f, dt);
        const double nn = znew.w.norm() + (znew.m.size() ? znew.m.norm() : 0.0);
        if (!std::isfinite(nn))
            throw PicardDivergence("step_nonlinear: iterate left the finite range",
                                   time_hint, it + 1);
        double err = (znew.w - z.w).norm();
        if (znew.m.size()) err += (znew.m - z.m).norm();
        z = std::move(znew);
        if (err <= cfg_.picard_tol * std::max(nn, 1e-290)) return z;
    }
    throw PicardDivergence("step_nonlinear: no fixed point within iteration budget",
                           time_hint, cfg_.picard_max_iter);
}

Eigen::VectorXd KdvSolver::step_nonlinear_interior(const Eigen::VectorXd& u, double h,
                                                   const Eigen::VectorXd& f,
                                                   double time_hint) const {
    return assemble(step_nonlinear_split(split_state(u), h, f, time_hint));
}

StateVector KdvSolver::step_nonlinear(const StateVector& state, double h,
                                      const StateVector& forcing) const {
    state.check_same_grid(forcing);
    const double size = norm_l2(state) + std::fabs(h) * std::sqrt(cfg_.dt) +
                        norm_l2(forcing) * cfg_.dt;
    if (size > cfg_.smallness_eta)
        throw SmallnessError("step_nonlinear: data exceeds the smallness threshold");
    return from_interior(step_nonlinear_interior(interior(state), h, interior(forcing)));
}

double KdvSolver::left_slope(const StateVector& s) const { return vl_.dot(interior(s)); }
double KdvSolver::right_slope(const StateVector& s) const { return vr_.dot(interior(s)); }

double KdvSolver::dissipativity_margin() const {
    Eigen::MatrixXd sym = 0.5 * grid_.dx * (a_ + a_.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

}  // namespace kdvctrl
