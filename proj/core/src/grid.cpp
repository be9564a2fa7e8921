#include "kdvctrl/grid.hpp"

namespace kdvctrl {

double inner_product(const StateVector& a, const StateVector& b) {
    a.check_same_grid(b);
    const auto& u = a.values();
    const auto& v = b.values();
    double s = 0.5 * (u.front() * v.front() + u.back() * v.back());
    for (std::size_t i = 1; i + 1 < u.size(); ++i) s += u[i] * v[i];
    return s * a.grid().dx;
}

double norm_l2(const StateVector& a) { return std::sqrt(inner_product(a, a)); }

double energy(const StateVector& a) { return inner_product(a, a); }

}  // namespace kdvctrl
