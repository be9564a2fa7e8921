// Microbenchmarks for the stepping and feedback hot paths.
#include <benchmark/benchmark.h>

#include "kdvctrl/experiments.hpp"

using namespace kdvctrl;

namespace {

const ExperimentSetup& bench_setup() {
    static const ExperimentSetup setup = [] {
        ExperimentConfig cfg;
        cfg.node_count = 256;
        cfg.steps_per_period = 1000;
        return make_experiment_setup(cfg);
    }();
    return setup;
}

void BM_StepLinear(benchmark::State& state) {
    const KdvSolver& solver = *bench_setup().solver;
    Eigen::VectorXd u = solver.interior(random_smooth_h(solver, 1u));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(u.size());
    for (auto _ : state) {
        u = solver.step_interior(u, 0.01, zero);
        benchmark::DoNotOptimize(u.data());
    }
}
BENCHMARK(BM_StepLinear);

void BM_StepNonlinear(benchmark::State& state) {
    const KdvSolver& solver = *bench_setup().solver;
    Eigen::VectorXd u = 0.01 * solver.interior(random_smooth_h(solver, 2u));
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(u.size());
    for (auto _ : state) {
        u = solver.step_nonlinear_interior(u, 0.0, zero);
        benchmark::DoNotOptimize(u.data());
    }
}
BENCHMARK(BM_StepNonlinear);

void BM_ProjectM(benchmark::State& state) {
    const KdvSolver& solver = *bench_setup().solver;
    const ModalSubspace& sub = *solver.subspace();
    StateVector y = random_smooth_h(solver, 3u);
    for (auto _ : state) {
        StateVector m = sub.project_m(y);
        benchmark::DoNotOptimize(m.values().data());
    }
}
BENCHMARK(BM_ProjectM);

void BM_FeedbackEval(benchmark::State& state) {
    const ExperimentSetup& setup = bench_setup();
    FeedbackParams params;
    params.epsilon = 0.1;
    params.r_eps = 1e-3;
    params.library = &setup.library;
    Eigen::VectorXd m(2);
    m << 3e-4, -2e-4;
    double t = 0.0;
    for (auto _ : state) {
        const double v = u_eps_modal(t, m, params, setup.subspace());
        benchmark::DoNotOptimize(v);
        t += setup.dt;
    }
}
BENCHMARK(BM_FeedbackEval);

void BM_SemigroupPeriod(benchmark::State& state) {
    const ExperimentSetup& setup = bench_setup();
    const KdvSolver& solver = *setup.solver;
    StateVector y = random_smooth_h(solver, 4u);
    for (auto _ : state) {
        StateVector out = solver.semigroup_apply(y, setup.period);
        benchmark::DoNotOptimize(out.values().data());
    }
}
BENCHMARK(BM_SemigroupPeriod);

}  // namespace

BENCHMARK_MAIN();
