// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense ReLU MLP numerics with hand-derived gradients, temperature softmax,
// cross-entropy / distillation KL losses and Adam. Everything is f64.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "takfl/rng.hpp"

namespace takfl::nn {

using Label = std::size_t;

// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    // Rows selected by index, in the given order.
    Matrix gather_rows(std::span<const std::size_t> indices) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct MlpArchitecture {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_widths;
    std::size_t num_classes = 0;

    // input_dim, hidden..., num_classes
    std::vector<std::size_t> widths() const;
    std::size_t layer_count() const { return hidden_widths.size() + 1; }
    std::size_t parameter_count() const;

    // Throws ShapeError when a width is zero or num_classes < 2.
    void validate() const;

    // e.g. "16-32-10"
    std::string describe() const;

    bool operator==(const MlpArchitecture&) const = default;
};

// Flat parameters. Layout per layer: weights (fan_in x fan_out, row-major) then bias.
struct ParameterVector {
    MlpArchitecture arch;
    std::vector<double> values;

    static ParameterVector zeros(const MlpArchitecture& arch);

    std::size_t size() const { return values.size(); }
    bool all_finite() const;
    bool operator==(const ParameterVector&) const = default;
};

struct DenseLayer {
    Matrix weights; // fan_in x fan_out
    std::vector<double> bias;
};

std::vector<DenseLayer> unflatten(const ParameterVector& params);
ParameterVector flatten(const MlpArchitecture& arch, const std::vector<DenseLayer>& layers);

struct Batch {
    Matrix features;
    std::optional<std::vector<Label>> labels;
};

// Glorot-uniform weights, zero biases.
ParameterVector init_params(const MlpArchitecture& arch, Rng& rng);

Matrix forward(const ParameterVector& params, const Matrix& features);
inline Matrix forward(const ParameterVector& params, const Batch& batch) {
    return forward(params, batch.features);
}

// Inputs to every layer (post-activation) plus the output logits; consumed by backward().
struct ForwardTrace {
    std::vector<Matrix> layer_inputs;
    Matrix logits;
};

ForwardTrace forward_trace(const ParameterVector& params, const Matrix& features);

// Gradient of a scalar loss w.r.t. the flat parameters, given dLoss/dLogits.
std::vector<double> backward(const ParameterVector& params, const ForwardTrace& trace,
                             const Matrix& grad_logits);

std::vector<double> softmax_t(std::span<const double> logits, double temperature);

// Row-wise log(softmax(z / T)).
void log_softmax_t(std::span<const double> logits, double temperature, std::span<double> out);

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad; // w.r.t. the (student) logits
};

// Mean cross-entropy over the batch.
LossAndGrad cross_entropy(const Matrix& logits, std::span<const Label> labels);

// T^2 * mean_b KL( softmax(teacher/T) || softmax(student/T) ).
LossAndGrad kd_kl_loss(const Matrix& teacher_logits, const Matrix& student_logits,
                       double temperature);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    AdamConfig hp;
    std::vector<double> m;
    std::vector<double> v;
    uint64_t t = 0;

    static AdamState init(std::size_t n, const AdamConfig& hp);
};

// Bias-corrected Adam with decoupled weight decay:
//   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Lowest index wins ties.
std::size_t argmax(std::span<const double> values);

} // namespace takfl::nn
