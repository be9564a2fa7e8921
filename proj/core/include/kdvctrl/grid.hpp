#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "kdvctrl/errors.hpp"

namespace kdvctrl {

/// Uniform discretization of [0, L]. Node 0 sits at x = 0, node N-1 at x = L.
struct SpatialGrid {
    double length = 0.0;
    int node_count = 0;
    double dx = 0.0;

    static SpatialGrid make(double length, int node_count) {
        if (length <= 0.0) throw DomainError("SpatialGrid: length must be positive");
        if (node_count < 16) throw DomainError("SpatialGrid: need at least 16 nodes");
        SpatialGrid g;
        g.length = length;
        g.node_count = node_count;
        g.dx = length / static_cast<double>(node_count - 1);
        return g;
    }

    double x(int i) const { return dx * static_cast<double>(i); }
    int interior_count() const { return node_count - 2; }

    bool operator==(const SpatialGrid& o) const {
        return node_count == o.node_count && length == o.length;
    }
};

/// Sampled approximation of y(t,.) in L2(0,L) with homogeneous Dirichlet ends.
/// values[0] and values[N-1] are pinned to zero.
class StateVector {
  public:
    StateVector() = default;

    explicit StateVector(const SpatialGrid& grid)
        : grid_(grid), values_(static_cast<std::size_t>(grid.node_count), 0.0) {}

    StateVector(const SpatialGrid& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != grid_.node_count)
            throw DimensionError("StateVector: value count does not match grid");
        enforce_dirichlet();
    }

    static StateVector zero(const SpatialGrid& grid) { return StateVector(grid); }

    static StateVector from_function(const SpatialGrid& grid,
                                     const std::function<double(double)>& f) {
        StateVector s(grid);
        for (int i = 1; i < grid.node_count - 1; ++i) s.values_[i] = f(grid.x(i));
        return s;
    }

    const SpatialGrid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    int size() const { return grid_.node_count; }

    double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }
    double& at_interior(int i) { return values_[static_cast<std::size_t>(i)]; }

    void set_interior(int i, double v) {
        if (i <= 0 || i >= grid_.node_count - 1)
            throw DomainError("StateVector: boundary nodes are pinned to zero");
        values_[static_cast<std::size_t>(i)] = v;
    }

    StateVector& operator+=(const StateVector& o) {
        check_same_grid(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    StateVector& operator-=(const StateVector& o) {
        check_same_grid(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    StateVector& operator*=(double a) {
        for (auto& v : values_) v *= a;
        return *this;
    }

    friend StateVector operator+(StateVector a, const StateVector& b) { return a += b; }
    friend StateVector operator-(StateVector a, const StateVector& b) { return a -= b; }
    friend StateVector operator*(double a, StateVector s) { return s *= a; }

    void check_same_grid(const StateVector& o) const {
        if (!(grid_ == o.grid_)) throw DimensionError("StateVector: grid mismatch");
    }

  private:
    void enforce_dirichlet() {
        double scale = 0.0;
        for (double v : values_) scale = std::max(scale, std::fabs(v));
        const double tol = 1e-9 * std::max(scale, 1.0);
        if (std::fabs(values_.front()) > tol || std::fabs(values_.back()) > tol)
            throw DomainError("StateVector: Dirichlet end values must vanish");
        values_.front() = 0.0;
        values_.back() = 0.0;
    }

    SpatialGrid grid_;
    std::vector<double> values_;
};

/// Trapezoid-rule inner product on the grid (end nodes carry weight dx/2).
double inner_product(const StateVector& a, const StateVector& b);

/// Discrete L2 norm induced by inner_product.
double norm_l2(const StateVector& a);

/// E = integral of y^2 over [0,L], trapezoid weights.
double energy(const StateVector& a);

}  // namespace kdvctrl
