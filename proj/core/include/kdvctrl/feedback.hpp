#pragma once

#include <array>
#include <string>
#include <vector>

#include "kdvctrl/control.hpp"

namespace kdvctrl {

/// Four steering windows and targets for one rotating plane of M.
struct PlaneLibrary {
    CriticalPair pair;
    int pair_index = 0;
    int basis_offset = 0;
    double q_exact = 0.0;  // quarter period
    double q_snap = 0.0;   // quarter period snapped to the step grid
    double span = 0.0;     // active control length per window
    std::array<double, 4> window_start{};  // start of K_i, i = 1..4
    ControlSignal u0;      // rescaled so the quadratic target has unit norm
    std::array<Eigen::Vector2d, 4> psi{};  // plane coordinates of the targets at T
    double kappa = 0.0;    // quadratic gain at unit control norm
    double scale = 0.0;    // rescale factor applied to u0
};

/// Precomputed periodic steering data: per plane, the four shifted controls,
/// their disjoint windows and the rotated unit targets, plus the certified
/// margin delta and measured regularity constants of the map v.
struct SteeringLibrary {
    double length = 0.0;
    int node_count = 0;
    double dt = 0.0;
    double period = 0.0;  // T
    std::vector<PlaneLibrary> planes;
    double delta = 0.0;
    double lipschitz_c0 = 0.0;
    double v_sup = 0.0;
    int delta_samples = 0;

    int plane_count() const { return static_cast<int>(planes.size()); }
    bool windows_disjoint() const;
};

struct LibraryBuildOptions {
    SynthesisOptions synthesis{};
    int guard_steps = 1;     // gap between plane blocks
    int window_gap_steps = 4;  // q cells minus control cells
    int delta_samples = 64;
    int lipschitz_samples = 100;
    unsigned sample_seed = 424242u;
};

/// Builds the full steering library for a length in N2 or N3.
SteeringLibrary build_steering_library(const KdvSolver& solver,
                                       const LibraryBuildOptions& opts = {});

/// Nonnegative weights (alpha_1..alpha_4 per plane) with
/// -S(T) z = sum alpha_i^j psi_i^j and alpha_1 alpha_3 = alpha_2 alpha_4 = 0.
/// z is given by modal coordinates with |z| = 1.
Eigen::VectorXd decompose_on_targets(const Eigen::VectorXd& z_modal,
                                     const SteeringLibrary& lib,
                                     const ModalSubspace& sub);

/// v(t, z) = sum alpha_i^j u_i^j(t) for t in [0, T].
double v_eval(double t, const Eigen::VectorXd& z_modal, const SteeringLibrary& lib,
              const ModalSubspace& sub);

struct DeltaReport {
    double delta = 0.0;
    double min_inner = 0.0;       // min over samples of -<y2(T), S(T)z>
    double max_y1_terminal = 0.0;
    double max_y2_mismatch = 0.0;
    int samples = 0;
};

/// Integrates the second-order cascade under v(., z) for sampled unit z and
/// certifies the uniform margin delta = min(-<y2(T), S(T)z>)/2 > 0.
DeltaReport estimate_delta(const KdvSolver& solver, const SteeringLibrary& lib,
                           int n_samples, unsigned seed);

struct FeedbackParams {
    double epsilon = 0.05;
    double r_eps = 0.0;  // validity radius used by the contraction experiment
    const SteeringLibrary* library = nullptr;

    void validate() const {
        if (epsilon <= 0.0 || epsilon >= 1.0)
            throw DomainError("FeedbackParams: epsilon in (0,1)");
        if (library == nullptr) throw DomainError("FeedbackParams: missing library");
    }
};

/// Periodic feedback value u_eps(t, y). Zero on H, scales with
/// sqrt(|P_M y|) below unit modal norm and saturates above it.
double u_eps(double t, const StateVector& y, const FeedbackParams& params,
             const ModalSubspace& sub);

/// Same feedback evaluated on modal coordinates (loop-internal fast path).
double u_eps_modal(double t, const Eigen::VectorXd& m_coords, const FeedbackParams& params,
                   const ModalSubspace& sub);

// Serialization: versioned little-endian container plus a CSV mirror.
void save_library(const SteeringLibrary& lib, const std::string& path);
SteeringLibrary load_library(const std::string& path);
void save_library_csv(const SteeringLibrary& lib, const std::string& path);

}  // namespace kdvctrl
