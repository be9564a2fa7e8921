#include "kdvctrl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace kdvctrl {

namespace {
constexpr double kPi = std::numbers::pi;
}

double critical_length(int l, int k) {
    const double m = static_cast<double>(l * l + l * k + k * k);
    return 2.0 * kPi * std::sqrt(m / 3.0);
}

double pair_omega(int l, int k) {
    const double m = static_cast<double>(l * l + l * k + k * k);
    const double num = static_cast<double>((2 * l + k) * (l - k) * (2 * k + l));
    return num / (3.0 * std::sqrt(3.0) * std::pow(m, 1.5));
}

std::string to_string(LengthClass c) {
    switch (c) {
        case LengthClass::C: return "C";
        case LengthClass::N1: return "N1";
        case LengthClass::N2: return "N2";
        case LengthClass::N3: return "N3";
        case LengthClass::N4: return "N4";
    }
    return "?";
}

std::vector<CriticalPair> enumerate_pairs(double length, double tol) {
    if (length <= 0.0) throw DomainError("enumerate_pairs: length must be positive");
    if (tol <= 0.0) throw DomainError("enumerate_pairs: tol must be positive");
    const int bound = static_cast<int>(std::ceil(length)) + 2;
    std::vector<CriticalPair> out;
    for (int l = 1; l <= bound; ++l) {
        for (int k = 1; k <= l; ++k) {
            if (std::fabs(length - critical_length(l, k)) <= tol * length) {
                CriticalPair p;
                p.l = l;
                p.k = k;
                p.omega = pair_omega(l, k);
                p.period = (l == k) ? std::numeric_limits<double>::infinity()
                                    : 2.0 * kPi / p.omega;
                out.push_back(p);
            }
        }
    }
    std::sort(out.begin(), out.end(),
              [](const CriticalPair& a, const CriticalPair& b) { return a.period < b.period; });
    return out;
}

LengthClassification classify_length(double length, double tol) {
    LengthClassification r;
    r.pairs = enumerate_pairs(length, tol);
    const int n = static_cast<int>(r.pairs.size());
    const bool has_degenerate =
        std::any_of(r.pairs.begin(), r.pairs.end(), [](const CriticalPair& p) { return p.degenerate(); });
    if (n == 0) {
        r.cls = LengthClass::C;
        r.dim_m = 0;
    } else if (n == 1 && has_degenerate) {
        r.cls = LengthClass::N1;
        r.dim_m = 1;
    } else if (n == 1) {
        r.cls = LengthClass::N2;
        r.dim_m = 2;
    } else if (!has_degenerate) {
        r.cls = LengthClass::N3;
        r.dim_m = 2 * n;
    } else {
        r.cls = LengthClass::N4;
        r.dim_m = 2 * n - 1;
    }
    return r;
}

double ModePair::eval(int which, int deriv_order, double x) const {
    // phi1 = sum amp*cos(kappa x), phi2 = sum amp*sin(kappa x), signed kappa.
    double s = 0.0;
    for (int j = 0; j < 3; ++j) {
        const double kj = kappa[j];
        double p = 1.0;
        for (int d = 0; d < deriv_order; ++d) p *= kj;
        const int phase = deriv_order % 4;
        double f;
        if (which == 1) {
            switch (phase) {
                case 0: f = std::cos(kj * x); break;
                case 1: f = -std::sin(kj * x); break;
                case 2: f = -std::cos(kj * x); break;
                default: f = std::sin(kj * x); break;
            }
        } else {
            switch (phase) {
                case 0: f = std::sin(kj * x); break;
                case 1: f = std::cos(kj * x); break;
                case 2: f = -std::sin(kj * x); break;
                default: f = -std::cos(kj * x); break;
            }
        }
        s += amp[j] * p * f;
    }
    return s;
}

ModalSubspace ModalSubspace::build(double length, const SpatialGrid& grid, double tol) {
    LengthClassification cls = classify_length(length, tol);
    if (cls.cls == LengthClass::C)
        throw DomainError("ModalSubspace: length is not critical, subspace is empty");

    ModalSubspace sub;
    sub.grid_ = grid;
    sub.length_ = length;

    int offset = 0;
    for (const CriticalPair& p : cls.pairs) {
        ModePair m;
        m.pair = p;
        const double root = std::sqrt(3.0 * static_cast<double>(p.l * p.l + p.l * p.k + p.k * p.k));
        const double ka = static_cast<double>(2 * p.l + p.k) / root;
        const double kb = static_cast<double>(p.l - p.k) / root;
        const double kc = static_cast<double>(p.l + 2 * p.k) / root;
        m.kappa[0] = -ka;
        m.kappa[1] = kb;
        m.kappa[2] = kc;
        // Coefficients solving phi(0) = phi'(0) = 0 for the three exponentials.
        m.amp[0] = kc - kb;
        m.amp[1] = -(kc + ka);
        m.amp[2] = ka + kb;
        m.basis_offset = offset;
        m.basis_count = p.degenerate() ? 1 : 2;
        offset += m.basis_count;
        sub.modes_.push_back(m);
    }

    // Sample, normalize each function, then modified Gram-Schmidt in the
    // trapezoid inner product to clean up quadrature-level cross terms.
    std::vector<StateVector> raw;
    for (const ModePair& m : sub.modes_) {
        for (int which = 1; which <= m.basis_count; ++which) {
            StateVector f = StateVector::from_function(
                grid, [&](double x) { return m.eval(which, 0, x); });
            raw.push_back(std::move(f));
        }
    }
    for (auto& f : raw) {
        const double n = norm_l2(f);
        if (n <= 0.0) throw SolverFailure("ModalSubspace: degenerate sampled mode");
        f *= 1.0 / n;
    }
    std::vector<StateVector> ortho;
    for (auto& f : raw) {
        StateVector g = f;
        for (const auto& e : ortho) g -= inner_product(g, e) * e;
        const double n = norm_l2(g);
        if (n < 0.5)
            throw SolverFailure("ModalSubspace: sampled basis nearly dependent, refine grid");
        g *= 1.0 / n;
        ortho.push_back(std::move(g));
    }
    sub.basis_ = std::move(ortho);

    // Orientation: the free flow must rotate phi1 toward +phi2. The analytic
    // construction already satisfies -(phi1' + phi1''') = omega*phi2; flip
    // phi2 if orthonormalization ever reversed it.
    for (const ModePair& m : sub.modes_) {
        if (m.basis_count != 2 || m.pair.omega == 0.0) continue;
        StateVector aphi1 = StateVector::from_function(grid, [&](double x) {
            return -(m.eval(1, 1, x) + m.eval(1, 3, x));
        });
        if (inner_product(aphi1, sub.basis_[m.basis_offset + 1]) < 0.0) {
            sub.basis_[m.basis_offset + 1] *= -1.0;
        }
    }

    const int dim = static_cast<int>(sub.basis_.size());
    const int ni = grid.interior_count();
    sub.phi_.resize(ni, dim);
    const double sqdx = std::sqrt(grid.dx);
    for (int c = 0; c < dim; ++c)
        for (int i = 0; i < ni; ++i) sub.phi_(i, c) = sqdx * sub.basis_[c][i + 1];

    sub.gram_.resize(dim, dim);
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b)
            sub.gram_(a, b) = inner_product(sub.basis_[a], sub.basis_[b]);

    return sub;
}

Eigen::VectorXd ModalSubspace::coefficients_interior(const Eigen::VectorXd& u) const {
    return phi_.transpose() * u;
}

Eigen::VectorXd ModalSubspace::coefficients(const StateVector& y) const {
    if (!(y.grid() == grid_)) throw DimensionError("ModalSubspace: grid mismatch");
    const int ni = grid_.interior_count();
    Eigen::VectorXd u(ni);
    for (int i = 0; i < ni; ++i) u[i] = y[i + 1];
    return coefficients_interior(u);
}

StateVector ModalSubspace::from_coefficients(const Eigen::VectorXd& c) const {
    if (c.size() != phi_.cols()) throw DimensionError("ModalSubspace: coefficient count");
    Eigen::VectorXd u = phi_ * c;
    StateVector y(grid_);
    for (int i = 0; i < u.size(); ++i) y.at_interior(i + 1) = u[i];
    return y;
}

StateVector ModalSubspace::project_m(const StateVector& y) const {
    return from_coefficients(coefficients(y));
}

StateVector ModalSubspace::project_h(const StateVector& y) const {
    StateVector m = project_m(y);
    StateVector out = y;
    out -= m;
    return out;
}

double ModalSubspace::norm_m(const StateVector& y) const {
    return std::sqrt(grid_.dx) * coefficients(y).norm();
}

Eigen::VectorXd ModalSubspace::rotate_coefficients(const Eigen::VectorXd& c, double t) const {
    Eigen::VectorXd out = c;
    for (const ModePair& m : modes_) {
        if (m.basis_count != 2) continue;  // omega = 0, stationary
        const double th = m.pair.omega * t;
        const double cs = std::cos(th), sn = std::sin(th);
        const double a = c[m.basis_offset], b = c[m.basis_offset + 1];
        out[m.basis_offset] = cs * a - sn * b;
        out[m.basis_offset + 1] = sn * a + cs * b;
    }
    return out;
}

StateVector ModalSubspace::rotate_in_m(const StateVector& v, double t, double tol) const {
    Eigen::VectorXd c = coefficients(v);
    StateVector inm = from_coefficients(c);
    StateVector rem = v;
    rem -= inm;
    const double nv = norm_l2(v);
    if (norm_l2(rem) > tol * std::max(nv, 1.0))
        throw DomainError("rotate_in_m: vector has an H-component above tolerance");
    return from_coefficients(rotate_coefficients(c, t));
}

double ModalSubspace::equation_residual() const {
    double worst = 0.0;
    for (const ModePair& m : modes_) {
        const double w = m.pair.omega;
        for (int i = 0; i < grid_.node_count; ++i) {
            const double x = grid_.x(i);
            // -i w phi + phi' + phi''' = 0 split into real and imaginary parts.
            const double r1 = m.eval(1, 1, x) + m.eval(1, 3, x) + w * m.eval(2, 0, x);
            const double r2 = m.eval(2, 1, x) + m.eval(2, 3, x) - w * m.eval(1, 0, x);
            worst = std::max(worst, std::max(std::fabs(r1), std::fabs(r2)));
        }
        // All four boundary conditions (values and slopes at both ends).
        for (double xb : {0.0, length_}) {
            for (int which = 1; which <= 2; ++which) {
                worst = std::max(worst, std::fabs(m.eval(which, 0, xb)));
                worst = std::max(worst, std::fabs(m.eval(which, 1, xb)));
            }
        }
    }
    return worst;
}

void ModalSubspace::export_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("ModalSubspace::export_csv: cannot open " + path);
    out << "x";
    for (std::size_t j = 0; j < modes_.size(); ++j) {
        out << ",phi1_" << (j + 1);
        if (modes_[j].basis_count == 2) out << ",phi2_" << (j + 1);
    }
    out << "\r\n";
    out.precision(17);
    for (int i = 0; i < grid_.node_count; ++i) {
        out << grid_.x(i);
        for (const ModePair& m : modes_) {
            out << "," << basis_[m.basis_offset][i];
            if (m.basis_count == 2) out << "," << basis_[m.basis_offset + 1][i];
        }
        out << "\r\n";
    }
}

}  // namespace kdvctrl
