#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

#include "kdvctrl/grid.hpp"

namespace kdvctrl {

/// Integer pair (l >= k >= 1) whose length formula matches the interval length.
/// omega is the rotation frequency of the associated mode pair; the period is
/// 2*pi/omega and is undefined (infinite) when l == k.
struct CriticalPair {
    int l = 0;
    int k = 0;
    double omega = 0.0;
    double period = std::numeric_limits<double>::infinity();

    bool degenerate() const { return l == k; }
};

/// Length of the interval associated with the pair (l, k).
double critical_length(int l, int k);

/// Rotation frequency of the mode pair associated with (l, k).
double pair_omega(int l, int k);

enum class LengthClass { C, N1, N2, N3, N4 };

std::string to_string(LengthClass c);

struct LengthClassification {
    LengthClass cls = LengthClass::C;
    std::vector<CriticalPair> pairs;  // sorted by ascending period
    int dim_m = 0;
};

/// All pairs l >= k >= 1 with |L - L(l,k)| <= tol*L, bounded search l,k <= ceil(L)+2.
std::vector<CriticalPair> enumerate_pairs(double length, double tol = 1e-9);

LengthClassification classify_length(double length, double tol = 1e-9);

/// One mode pair of the uncontrollable subspace, in closed form. The complex
/// profile is sum_j amp_j * exp(i*kappa_j*x) with real amplitudes, so the two
/// real basis functions are cosine and sine combinations of three wavenumbers.
struct ModePair {
    CriticalPair pair;
    double kappa[3] = {0, 0, 0};  // signed wavenumbers
    double amp[3] = {0, 0, 0};    // real amplitudes before normalization
    int basis_offset = 0;         // index of phi1 in the subspace basis
    int basis_count = 2;          // 1 when l == k

    double eval(int which, int deriv_order, double x) const;
};

/// Finite-dimensional subspace M spanned by the mode pairs for a critical
/// length, sampled on a grid and orthonormalized in the trapezoid inner
/// product. Provides the orthogonal projectors onto M and H = M-perp and the
/// exact rotation model of the free flow restricted to M.
class ModalSubspace {
  public:
    static ModalSubspace build(double length, const SpatialGrid& grid, double tol = 1e-9);

    const SpatialGrid& grid() const { return grid_; }
    double length() const { return length_; }
    int dim() const { return static_cast<int>(basis_.size()); }
    int pair_count() const { return static_cast<int>(modes_.size()); }
    const std::vector<ModePair>& modes() const { return modes_; }
    const std::vector<StateVector>& basis() const { return basis_; }
    const Eigen::MatrixXd& gram() const { return gram_; }

    /// Interior samples of the orthonormal basis, scaled so columns are
    /// euclidean-orthonormal (trapezoid-orthonormal on the grid).
    const Eigen::MatrixXd& interior_basis() const { return phi_; }

    StateVector project_m(const StateVector& y) const;
    StateVector project_h(const StateVector& y) const;

    /// Coefficients of P_M(y) in the orthonormal basis; ||P_M y|| = sqrt(dx)*|c|.
    Eigen::VectorXd coefficients(const StateVector& y) const;
    Eigen::VectorXd coefficients_interior(const Eigen::VectorXd& u) const;
    StateVector from_coefficients(const Eigen::VectorXd& c) const;

    double norm_m(const StateVector& y) const;

    /// Exact rotation by angle omega_j * t in each (phi1, phi2) plane,
    /// identity on degenerate pairs. Requires v in range(P_M) up to tol.
    StateVector rotate_in_m(const StateVector& v, double t, double tol = 1e-6) const;

    /// Rotation applied directly to basis coefficients.
    Eigen::VectorXd rotate_coefficients(const Eigen::VectorXd& c, double t) const;

    /// Max nodal residual of the analytic mode equations and boundary values.
    double equation_residual() const;

    void export_csv(const std::string& path) const;

  private:
    SpatialGrid grid_;
    double length_ = 0.0;
    std::vector<ModePair> modes_;
    std::vector<StateVector> basis_;
    Eigen::MatrixXd phi_;   // interior samples, euclidean-orthonormal columns
    Eigen::MatrixXd gram_;  // trapezoid Gram matrix of the stored basis
};

}  // namespace kdvctrl
