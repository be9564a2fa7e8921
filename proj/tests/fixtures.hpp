#pragma once

#include "kdvctrl/experiments.hpp"

namespace testutil {

inline kdvctrl::ExperimentConfig light_config() {
    kdvctrl::ExperimentConfig cfg;
    cfg.node_count = 128;
    cfg.steps_per_period = 500;
    cfg.periods = 10;
    return cfg;
}

// One shared desk of light-scale experiment state per test binary.
inline const kdvctrl::ExperimentSetup& light_setup() {
    static const kdvctrl::ExperimentSetup setup = kdvctrl::make_experiment_setup(light_config());
    return setup;
}

inline const kdvctrl::KdvSolver& light_solver() { return *light_setup().solver; }

}  // namespace testutil
