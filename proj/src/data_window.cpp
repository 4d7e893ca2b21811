#include "ddctl/data_window.hpp"

#include <string>

#include "ddctl/error.hpp"

namespace ddctl {

HankelMatrix build_hankel(std::span<const Vector> signal, int order) {
    if (order < 1) throw Error(ErrorCode::Parameter, "Hankel order must be positive");
    const int len = static_cast<int>(signal.size());
    if (len < order) {
        throw Error(ErrorCode::Length, "signal of length " + std::to_string(len) +
                                           " is too short for Hankel order " + std::to_string(order));
    }
    const int sigma = static_cast<int>(signal.front().size());
    if (sigma < 1) throw Error(ErrorCode::DimensionMismatch, "Hankel signal samples must be nonempty");
    const int depth = len - order + 1;
    Matrix h(sigma * order, depth);
    for (int c = 0; c < depth; ++c) {
        for (int r = 0; r < order; ++r) {
            const Vector& z = signal[static_cast<std::size_t>(r + c)];
            if (z.size() != sigma) throw Error(ErrorCode::DimensionMismatch, "Hankel signal has mixed sample sizes");
            h.block(r * sigma, c, sigma, 1) = z;
        }
    }
    return HankelMatrix(std::move(h), order, sigma);
}

Matrix DataMatrices::stacked() const {
    Matrix w(inputs.rows() + states_prev.rows(), inputs.cols());
    w << inputs, states_prev;
    return w;
}

DataWindow::DataWindow(std::span<const Vector> inputs, std::span<const Vector> states, std::int64_t current_time)
    : length_(static_cast<int>(inputs.size())), current_time_(current_time) {
    if (length_ < 1) throw Error(ErrorCode::Length, "data window needs at least one input sample");
    if (states.size() != inputs.size() + 1) {
        throw Error(ErrorCode::Length, "data window needs exactly T+1 states for T inputs");
    }
    input_dim_ = static_cast<int>(inputs.front().size());
    state_dim_ = static_cast<int>(states.front().size());
    for (const auto& u : inputs) {
        if (u.size() != input_dim_) throw Error(ErrorCode::DimensionMismatch, "inconsistent input dimension");
    }
    for (const auto& x : states) {
        if (x.size() != state_dim_) throw Error(ErrorCode::DimensionMismatch, "inconsistent state dimension");
    }
    inputs_.assign(inputs.begin(), inputs.end());
    states_.assign(states.begin(), states.end());
}

const Vector& DataWindow::input(int i) const {
    return inputs_[static_cast<std::size_t>((input_head_ + i) % length_)];
}

const Vector& DataWindow::state(int i) const {
    return states_[static_cast<std::size_t>((state_head_ + i) % (length_ + 1))];
}

Signal DataWindow::input_suffix(int count) const {
    if (count < 0 || count > length_) throw Error(ErrorCode::Length, "input suffix longer than the window");
    Signal out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = length_ - count; i < length_; ++i) out.push_back(input(i));
    return out;
}

DataMatrices DataWindow::matrices() const {
    DataMatrices d{Matrix(input_dim_, length_), Matrix(state_dim_, length_), Matrix(state_dim_, length_)};
    for (int i = 0; i < length_; ++i) {
        d.inputs.col(i) = input(i);
        d.states_prev.col(i) = state(i);
        d.states_next.col(i) = state(i + 1);
    }
    return d;
}

void DataWindow::push(const Vector& u, const Vector& x_next) {
    if (u.size() != input_dim_ || x_next.size() != state_dim_) {
        throw Error(ErrorCode::DimensionMismatch, "pushed sample does not match the window dimensions");
    }
    // The slot at the head holds the oldest sample; overwrite it and advance.
    inputs_[static_cast<std::size_t>(input_head_)] = u;
    input_head_ = (input_head_ + 1) % length_;
    states_[static_cast<std::size_t>(state_head_)] = x_next;
    state_head_ = (state_head_ + 1) % (length_ + 1);
    ++current_time_;
}

DataWindow push_sample(DataWindow window, const Vector& u, const Vector& x_next) {
    window.push(u, x_next);
    return window;
}

bool rank_condition_holds(const DataMatrices& data, std::optional<double> tol) {
    return equilibrated_rank(data.stacked(), tol) == data.input_dim() + data.state_dim();
}

bool rank_condition_holds(const DataWindow& window, std::optional<double> tol) {
    return rank_condition_holds(window.matrices(), tol);
}

} // namespace ddctl
