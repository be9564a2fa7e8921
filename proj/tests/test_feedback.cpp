#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "kdvctrl/io.hpp"

using namespace kdvctrl;
using testutil::light_setup;

namespace {
constexpr double kPi = std::numbers::pi;

Eigen::VectorXd unit_modal(const ModalSubspace& sub, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(sub.dim());
    for (int i = 0; i < z.size(); ++i) z[i] = gauss(rng);
    z.normalize();
    return z;
}
}  // namespace

TEST_CASE("library schedule: quarter period, windows, targets") {
    const SteeringLibrary& lib = light_setup().library;
    const ModalSubspace& sub = light_setup().subspace();
    REQUIRE(lib.plane_count() == 1);
    const PlaneLibrary& plane = lib.planes[0];

    // Quarter period against the closed form 441*pi/(10*sqrt(21)) / 4.
    const double p_expected = 441.0 * kPi / (10.0 * std::sqrt(21.0));
    CHECK(plane.q_exact == doctest::Approx(p_expected / 4.0).epsilon(1e-12));
    CHECK(plane.q_snap == doctest::Approx(plane.q_exact).epsilon(1e-12));  // aligned grid

    // K4 = [0, T0], K3 = [q, q+T0], K2 = [2q, 2q+T0], K1 = [3q, 3q+T0].
    CHECK(plane.window_start[3] == 0.0);
    CHECK(plane.window_start[2] == doctest::Approx(plane.q_snap));
    CHECK(plane.window_start[1] == doctest::Approx(2.0 * plane.q_snap));
    CHECK(plane.window_start[0] == doctest::Approx(3.0 * plane.q_snap));
    CHECK(plane.span < plane.q_snap);
    CHECK(lib.windows_disjoint());
    CHECK(lib.period >= 3.0 * plane.q_exact + plane.span - 1e-9);
    CHECK(lib.period == doctest::Approx(3.0 * plane.q_snap + plane.span));

    // Rotation identities of the targets.
    const double w = plane.pair.omega;
    auto rot = [&](const Eigen::Vector2d& v, double t) {
        Eigen::Matrix2d r;
        r << std::cos(w * t), -std::sin(w * t), std::sin(w * t), std::cos(w * t);
        return (r * v).eval();
    };
    CHECK((plane.psi[1] - rot(plane.psi[0], plane.q_snap)).norm() <= 1e-12);
    CHECK((plane.psi[2] + plane.psi[0]).norm() <= 1e-12);
    CHECK((plane.psi[3] + plane.psi[1]).norm() <= 1e-12);
    for (const auto& psi : plane.psi) CHECK(psi.norm() == doctest::Approx(1.0).epsilon(1e-6));

    // The active control vanishes outside its window.
    CHECK(plane.u0.value_at(plane.span + 0.5 * lib.dt) == 0.0);
    CHECK(plane.u0.value_at(-0.5 * lib.dt) == 0.0);

    (void)sub;
}

TEST_CASE("library construction requires a supported class") {
    SolverConfig cfg;
    cfg.dt = 0.05;
    KdvSolver n1 = KdvSolver::make(2.0 * kPi, 128, cfg);
    CHECK_THROWS_AS(build_steering_library(n1), UnsupportedClassError);
    KdvSolver c = KdvSolver::make(4.0, 128, cfg);
    CHECK_THROWS_AS(build_steering_library(c), UnsupportedClassError);
}

TEST_CASE("decomposition on targets: complementarity and normalization") {
    const SteeringLibrary& lib = light_setup().library;
    const ModalSubspace& sub = light_setup().subspace();
    const PlaneLibrary& plane = lib.planes[0];

    // z chosen so that -S(T) z = psi_1.
    Eigen::VectorXd psi1(2);
    psi1 << plane.psi[0][0], plane.psi[0][1];
    Eigen::VectorXd z = -sub.rotate_coefficients(psi1, -lib.period);
    Eigen::VectorXd alphas = decompose_on_targets(z, lib, sub);
    CHECK(alphas[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(alphas[1] <= 1e-10);
    CHECK(alphas[2] == 0.0);
    CHECK(alphas[3] <= 1e-10);

    // Sign flip moves the weight to the antipodal target.
    Eigen::VectorXd alphas2 = decompose_on_targets((-z).eval(), lib, sub);
    CHECK(alphas2[2] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(alphas2[0] == 0.0);

    for (unsigned seed : {4u, 5u, 6u, 7u}) {
        Eigen::VectorXd zr = unit_modal(sub, seed);
        Eigen::VectorXd a = decompose_on_targets(zr, lib, sub);
        CHECK(a[0] * a[2] == 0.0);
        CHECK(a[1] * a[3] == 0.0);
        CHECK(a.squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(a.minCoeff() >= 0.0);
    }

    Eigen::VectorXd not_unit = 2.0 * unit_modal(sub, 8u);
    CHECK_THROWS_AS(decompose_on_targets(not_unit, lib, sub), DomainError);
}

TEST_CASE("v vanishes between windows and follows the shift bookkeeping") {
    const SteeringLibrary& lib = light_setup().library;
    const ModalSubspace& sub = light_setup().subspace();
    const PlaneLibrary& plane = lib.planes[0];

    Eigen::VectorXd z = unit_modal(sub, 12u);
    // Gap between K4 and K3.
    const double gap_t = plane.span + 0.45 * (plane.q_snap - plane.span);
    CHECK(v_eval(gap_t, z, lib, sub) == 0.0);
    CHECK_THROWS_AS(v_eval(-0.1, z, lib, sub), DomainError);
    CHECK_THROWS_AS(v_eval(lib.period + 0.1, z, lib, sub), DomainError);

    // Inside K1 the value is alpha_1 * u0(t - 3q).
    Eigen::VectorXd alphas = decompose_on_targets(z, lib, sub);
    const double t = plane.window_start[0] + 0.3 * plane.span;
    const double expect = alphas[0] * plane.u0.value_at(t - plane.window_start[0]);
    CHECK(v_eval(t, z, lib, sub) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("v is Lipschitz in the direction with a stable constant") {
    const SteeringLibrary& lib = light_setup().library;
    const ModalSubspace& sub = light_setup().subspace();
    std::mt19937 rng(77u);
    std::normal_distribution<double> gauss(0.0, 1.0);

    auto measure = [&](int pairs) {
        double c0 = 0.0;
        for (int s = 0; s < pairs; ++s) {
            Eigen::VectorXd a(sub.dim()), b(sub.dim());
            for (int i = 0; i < sub.dim(); ++i) {
                a[i] = gauss(rng);
                b[i] = gauss(rng);
            }
            a.normalize();
            b.normalize();
            const double dz = (a - b).norm();
            if (dz < 1e-9) continue;
            for (int k = 0; k < 64; ++k) {
                const double t = (k + 0.5) / 64.0 * lib.period;
                c0 = std::max(c0, std::fabs(v_eval(t, a, lib, sub) - v_eval(t, b, lib, sub)) / dz);
            }
        }
        return c0;
    };
    const double c100 = measure(100);
    const double c200 = measure(200);  // fresh draws extend the sample
    CHECK(c100 > 0.0);
    CHECK(std::isfinite(c100));
    CHECK(c200 <= 1.5 * std::max(c100, lib.lipschitz_c0));
}

TEST_CASE("delta certificate: positivity, cascade checks, analytic value") {
    const ExperimentSetup& setup = light_setup();
    DeltaReport rep = estimate_delta(*setup.solver, setup.library, 24, 5u);
    CHECK(rep.delta > 0.0);
    CHECK(rep.min_inner >= 2.0 * rep.delta);
    CHECK(rep.max_y1_terminal <= 1e-5);
    CHECK(rep.max_y2_mismatch <= 1e-4);
    // With unit targets the sphere minimum of the cubic form is 1/sqrt(2),
    // so delta should sit near 1/(2 sqrt(2)).
    CHECK(std::fabs(rep.delta - 0.5 / std::sqrt(2.0)) <= 0.01);
}

TEST_CASE("feedback law: branches, periodicity, bounds, gain linearity") {
    const ExperimentSetup& setup = light_setup();
    const SteeringLibrary& lib = setup.library;
    const ModalSubspace& sub = setup.subspace();

    FeedbackParams params;
    params.epsilon = 0.05;
    params.r_eps = 1e-3;
    params.library = &lib;

    // Zero modal part gives exactly zero.
    Eigen::VectorXd zerom = Eigen::VectorXd::Zero(sub.dim());
    CHECK(u_eps_modal(1.0, zerom, params, sub) == 0.0);
    CHECK(u_eps(2.0, StateVector::zero(setup.solver->grid()), params, sub) == 0.0);

    std::mt19937 rng(31u);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> tdist(0.0, 3.0 * lib.period);
    double worst_ratio = 0.0;
    for (int s = 0; s < 100; ++s) {
        Eigen::VectorXd m(sub.dim());
        for (int i = 0; i < m.size(); ++i) m[i] = gauss(rng);
        m *= std::pow(10.0, -6.0 + 7.0 * (s / 100.0)) / m.norm();
        const double t = tdist(rng);
        const double val = u_eps_modal(t, m, params, sub);
        const double cap = params.epsilon * lib.v_sup * std::min(1.0, std::sqrt(m.norm()));
        CHECK(std::fabs(val) <= cap * (1.0 + 1e-12));
        worst_ratio = std::max(worst_ratio, std::fabs(val) / std::max(cap, 1e-300));

        // Periodicity and linearity in the gain.
        const double shifted = u_eps_modal(t + lib.period, m, params, sub);
        CHECK(shifted == doctest::Approx(val).epsilon(1e-9));
        FeedbackParams twice = params;
        twice.epsilon = 2.0 * params.epsilon;
        CHECK(u_eps_modal(t, m, twice, sub) == doctest::Approx(2.0 * val).epsilon(1e-13));
    }
    CHECK(worst_ratio <= 1.0 + 1e-12);

    // Saturated branch above unit modal norm.
    Eigen::VectorXd big = unit_modal(sub, 3u) * 2.5;
    const double vb = u_eps_modal(0.3, big, params, sub);
    Eigen::VectorXd dir = big / big.norm();
    const double tm = 0.3;
    Eigen::VectorXd zarg = sub.rotate_coefficients(dir, -tm);
    CHECK(vb == doctest::Approx(params.epsilon * v_eval(tm, zarg, lib, sub)).epsilon(1e-12));

    // Measured Lipschitz modulus in y away from the origin stays bounded.
    double khat = 0.0;
    for (int s = 0; s < 60; ++s) {
        Eigen::VectorXd a = unit_modal(sub, 100u + static_cast<unsigned>(s)) * 0.5;
        Eigen::VectorXd b = a + 0.01 * unit_modal(sub, 200u + static_cast<unsigned>(s));
        const double t = tdist(rng);
        khat = std::max(khat, std::fabs(u_eps_modal(t, a, params, sub) -
                                        u_eps_modal(t, b, params, sub)) /
                                  (a - b).norm());
    }
    CHECK(std::isfinite(khat));
    CHECK(khat <= 50.0 * params.epsilon * (lib.lipschitz_c0 + lib.v_sup + 1.0));

    FeedbackParams bad;
    bad.epsilon = 1.5;
    bad.library = &lib;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("library container round-trips and mirrors to CSV") {
    namespace fs = std::filesystem;
    const SteeringLibrary& lib = light_setup().library;
    const std::string bin = (fs::temp_directory_path() / "kdvctrl_lib_test.bin").string();
    const std::string csv = (fs::temp_directory_path() / "kdvctrl_lib_test.csv").string();

    save_library(lib, bin);
    SteeringLibrary back = load_library(bin);
    CHECK(back.length == lib.length);
    CHECK(back.node_count == lib.node_count);
    CHECK(back.dt == lib.dt);
    CHECK(back.period == lib.period);
    CHECK(back.delta == lib.delta);
    CHECK(back.lipschitz_c0 == lib.lipschitz_c0);
    CHECK(back.v_sup == lib.v_sup);
    REQUIRE(back.plane_count() == lib.plane_count());
    for (int j = 0; j < lib.plane_count(); ++j) {
        const PlaneLibrary& a = lib.planes[static_cast<std::size_t>(j)];
        const PlaneLibrary& b = back.planes[static_cast<std::size_t>(j)];
        CHECK(a.pair.l == b.pair.l);
        CHECK(a.pair.k == b.pair.k);
        CHECK(a.q_snap == b.q_snap);
        CHECK(a.span == b.span);
        CHECK(a.kappa == b.kappa);
        REQUIRE(a.u0.samples.size() == b.u0.samples.size());
        for (std::size_t c = 0; c < a.u0.samples.size(); ++c)
            CHECK(a.u0.samples[c] == b.u0.samples[c]);
        for (int i = 0; i < 4; ++i) {
            CHECK(a.window_start[static_cast<std::size_t>(i)] ==
                  b.window_start[static_cast<std::size_t>(i)]);
            CHECK((a.psi[static_cast<std::size_t>(i)] - b.psi[static_cast<std::size_t>(i)]).norm() ==
                  0.0);
        }
    }

    save_library_csv(lib, csv);
    CHECK(fs::file_size(csv) > 100);

    // Corrupt magic is rejected.
    {
        std::ofstream bad(bin, std::ios::binary);
        bad << "NOTALIB!";
    }
    CHECK_THROWS_AS(load_library(bin), ConfigError);
    fs::remove(bin);
    fs::remove(csv);
}

TEST_CASE("N3 library: two planes with snapped spacings and a positive margin") {
    const double L = 2.0 * kPi * std::sqrt(91.0 / 3.0);
    ExperimentConfig cfg;
    cfg.length = L;
    cfg.node_count = 128;
    cfg.steps_per_period = 400;

    SolverConfig scfg;
    scfg.dt = aligned_step(L, cfg.steps_per_period);
    KdvSolver solver = KdvSolver::make(L, cfg.node_count, scfg);

    LibraryBuildOptions opts;
    opts.synthesis.starts = 2;
    opts.synthesis.max_iterations = 50;
    opts.delta_samples = 12;
    opts.lipschitz_samples = 10;
    SteeringLibrary lib = build_steering_library(solver, opts);

    REQUIRE(lib.plane_count() == 2);
    CHECK(lib.windows_disjoint());
    CHECK(lib.delta > 0.0);
    for (const PlaneLibrary& plane : lib.planes) {
        CHECK(std::fabs(plane.q_snap - plane.q_exact) <= 0.5 * lib.dt);
        const double w = plane.pair.omega;
        Eigen::Matrix2d rot;
        rot << std::cos(w * plane.q_snap), -std::sin(w * plane.q_snap),
            std::sin(w * plane.q_snap), std::cos(w * plane.q_snap);
        CHECK((plane.psi[1] - rot * plane.psi[0]).norm() <= 1e-10);
        CHECK(plane.kappa >= 1e-3);
    }
    CHECK(lib.period >= 3.0 * lib.planes[1].q_snap + lib.planes[1].span - 1e-9);
}
