#pragma once

// Model-based constants behind the closed-loop guarantees, computed from the
// true mode matrices. Verification and reporting only: the online controller
// never sees any of this.

#include <optional>
#include <vector>

#include "ddctl/data_window.hpp"
#include "ddctl/dd_lqr.hpp"
#include "ddctl/switched_plant.hpp"

namespace ddctl {

/// Unique P = P' > 0 with A' P A - P + I = 0 (multiple-Lyapunov orientation).
/// Throws Error(Instability) if A is not Schur stable.
[[nodiscard]] Matrix discrete_lyapunov(const Matrix& a_cl);

struct ModeGainBound {
    Matrix gain;    ///< K_opt from the Riccati oracle
    Matrix gramian; ///< (A+BK) P (A+BK)' - P + I = 0
    double gamma = 0.0; ///< tr P + tr K P K'
    double c = 0.0;     ///< sqrt(gamma - n)
};

struct KappaReport {
    std::vector<ModeGainBound> modes;
    double kappa = 0.0;
};

/// Optimal gains and H2 costs of every mode; kappa = max_i sqrt(gamma_i - n).
[[nodiscard]] KappaReport kappa_bound(const std::vector<LinearMode>& modes);

struct DeltaReport {
    std::vector<Matrix> lyapunov; ///< P_i with A_cl' P A_cl - P + I = 0
    std::vector<double> delta;    ///< per-mode admissible radius, +inf when B_i = 0
    double lambda_max_p = 0.0;    ///< max_i lambda_max(P_i)
    double lambda_min_p = 0.0;    ///< min_i lambda_min(P_i)
    double delta_bar = 0.0;
};

/// Largest excitation radius for which the Lyapunov decrease survives:
/// the positive root of lambda_max ||B||^2 d^2 + 2 lambda_max ||A_cl|| ||B|| d - 1/2.
[[nodiscard]] DeltaReport delta_bar(const std::vector<LinearMode>& modes, const std::vector<Matrix>& gains);

/// lambda_max ||B||^2 d^2 + 2 lambda_max ||A_cl|| ||B|| d - 1/2.
[[nodiscard]] double lyapunov_margin(double lambda_max_p, double a_cl_norm, double b_norm, double d);

struct DwellReport {
    double alpha = 0.0;
    double lambda = 0.0;
    double phi = 0.0;
    double c0 = 0.0;
    double c = 0.0;
    double mu = 0.0;
    double tau_bar = 0.0;
};

/// Dwell-time bound for rate `lambda` (default (1 + alpha) / 2). Throws
/// Error(Parameter) unless alpha < lambda < 1.
[[nodiscard]] DwellReport tau_bar(const std::vector<LinearMode>& modes, const std::vector<Matrix>& gains,
                                  double delta, int window_length, std::optional<double> lambda = std::nullopt);

struct StabilityConstants {
    KappaReport gains;
    DeltaReport excitation;
    DwellReport dwell;
    double delta = 0.0;
    int window_length = 0;
};

[[nodiscard]] StabilityConstants stability_constants(const std::vector<LinearMode>& modes, double delta,
                                                     int window_length,
                                                     std::optional<double> lambda = std::nullopt);

/// Explicit feasible point of the data-driven program during a transient.
struct FeasibilityTuple {
    double gamma = 0.0;
    Matrix y; ///< T x n
    Matrix p;
    Matrix l;
    Matrix w;         ///< [U_{k-1}; X_{k-1}]
    Matrix selection; ///< E_k: T x T, ones on the last t diagonal entries
    Matrix q;         ///< W^+ [K; I] P
    Matrix kernel;    ///< S with W S = 0
    Matrix mismatch;  ///< Sigma, the part of X_k Y not explained by the reference mode
    int t = 0;
    int split = 0;            ///< T_0
    bool uses_new_mode = false; ///< t > T_0
};

/// Builds the tuple at step k (window newest state x(k)) after a switch at
/// k_s from `old_mode` to `new_mode`. `split` defaults to N - 1 and must lie
/// in [N - 1, T - N + 1]. Throws Error(Parameter) outside the transient
/// interval and Error(Construction) when the needed column block of W is not
/// full row rank.
[[nodiscard]] FeasibilityTuple build_feasibility_tuple(const DataWindow& window, const LinearMode& old_mode,
                                                       const LinearMode& new_mode, std::int64_t k,
                                                       std::int64_t k_s, std::optional<int> split = std::nullopt);

} // namespace ddctl
