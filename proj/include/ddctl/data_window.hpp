#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ddctl/linalg.hpp"

namespace ddctl {

using Signal = std::vector<Vector>;

/// Minimal PE sequence length N = (m+1)n + m for an m-input, n-state system.
[[nodiscard]] constexpr int min_excitation_length(int n, int m) { return (m + 1) * n + m; }

/// Smallest admissible window length 2N - 1.
[[nodiscard]] constexpr int min_window_length(int n, int m) { return 2 * min_excitation_length(n, m) - 1; }

/// Block-Hankel matrix of a vector signal. Block (r, c) holds sample r + c.
class HankelMatrix {
public:
    HankelMatrix(Matrix entries, int order, int signal_dim)
        : entries_(std::move(entries)), order_(order), signal_dim_(signal_dim) {}

    [[nodiscard]] const Matrix& entries() const noexcept { return entries_; }
    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] int depth() const noexcept { return static_cast<int>(entries_.cols()); }
    [[nodiscard]] int signal_dim() const noexcept { return signal_dim_; }

private:
    Matrix entries_;
    int order_;
    int signal_dim_;
};

/// Builds the (sigma*order) x (len - order + 1) block-Hankel matrix.
/// Throws Error(Length) when the signal is shorter than `order`.
[[nodiscard]] HankelMatrix build_hankel(std::span<const Vector> signal, int order);

/// Dense data matrices U_{k-1} (m x T), X_{k-1} (n x T) and X_k (n x T).
struct DataMatrices {
    Matrix inputs;
    Matrix states_prev;
    Matrix states_next;

    [[nodiscard]] int length() const noexcept { return static_cast<int>(inputs.cols()); }
    [[nodiscard]] int state_dim() const noexcept { return static_cast<int>(states_prev.rows()); }
    [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(inputs.rows()); }

    /// Stacked [U_{k-1}; X_{k-1}].
    [[nodiscard]] Matrix stacked() const;
};

/// Sliding window of the last T inputs u(k-T..k-1) and T+1 states x(k-T..k).
///
/// Storage is a pair of ring buffers; `matrices()` materializes the dense
/// data matrices. Time indices are relative to k = 0, so offline samples have
/// negative indices.
class DataWindow {
public:
    /// Takes T inputs and T+1 states, oldest first. `current_time` is the
    /// index k of the newest state.
    DataWindow(std::span<const Vector> inputs, std::span<const Vector> states, std::int64_t current_time = 0);

    [[nodiscard]] int length() const noexcept { return length_; }
    [[nodiscard]] int state_dim() const noexcept { return state_dim_; }
    [[nodiscard]] int input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] std::int64_t current_time() const noexcept { return current_time_; }

    /// Input u(k - T + i), i in [0, T).
    [[nodiscard]] const Vector& input(int i) const;
    /// State x(k - T + i), i in [0, T].
    [[nodiscard]] const Vector& state(int i) const;
    [[nodiscard]] const Vector& latest_state() const { return state(length_); }

    /// The last `count` inputs, oldest first.
    [[nodiscard]] Signal input_suffix(int count) const;
    [[nodiscard]] Signal inputs() const { return input_suffix(length_); }

    [[nodiscard]] DataMatrices matrices() const;

    /// Appends u(k) and x(k+1), discarding the oldest input and state.
    void push(const Vector& u, const Vector& x_next);

private:
    int length_;
    int state_dim_;
    int input_dim_;
    std::int64_t current_time_;
    std::vector<Vector> inputs_;
    std::vector<Vector> states_;
    int input_head_ = 0;
    int state_head_ = 0;
};

/// Value-returning form of DataWindow::push.
[[nodiscard]] DataWindow push_sample(DataWindow window, const Vector& u, const Vector& x_next);

/// rank [U_{k-1}; X_{k-1}] == m + n.
[[nodiscard]] bool rank_condition_holds(const DataMatrices& data, std::optional<double> tol = std::nullopt);
[[nodiscard]] bool rank_condition_holds(const DataWindow& window, std::optional<double> tol = std::nullopt);

} // namespace ddctl
