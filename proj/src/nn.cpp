// Copyright (c) 2026, The takfl-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "takfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "takfl/errors.hpp"

namespace takfl::nn {

namespace {

std::size_t checked_mul(std::size_t a, std::size_t b) {
    if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a)
        throw ShapeError("architecture too large: parameter count overflows");
    return a * b;
}

std::size_t checked_add(std::size_t a, std::size_t b) {
    if (b > std::numeric_limits<std::size_t>::max() - a)
        throw ShapeError("architecture too large: parameter count overflows");
    return a + b;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        std::ostringstream os;
        os << what << ": shape mismatch (" << a.rows() << "x" << a.cols() << " vs " << b.rows()
           << "x" << b.cols() << ")";
        throw ShapeError(os.str());
    }
}

void check_temperature(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw DomainError("temperature must be a positive finite number, got " +
                          std::to_string(temperature));
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_)
            throw ShapeError("row index " + std::to_string(indices[i]) + " out of range");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
    }
    return out;
}

std::vector<std::size_t> MlpArchitecture::widths() const {
    std::vector<std::size_t> w;
    w.reserve(hidden_widths.size() + 2);
    w.push_back(input_dim);
    w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
    w.push_back(num_classes);
    return w;
}

std::size_t MlpArchitecture::parameter_count() const {
    auto w = widths();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l)
        total = checked_add(total, checked_add(checked_mul(w[l], w[l + 1]), w[l + 1]));
    return total;
}

void MlpArchitecture::validate() const {
    if (input_dim == 0)
        throw ShapeError("input_dim must be positive");
    for (std::size_t i = 0; i < hidden_widths.size(); ++i)
        if (hidden_widths[i] == 0)
            throw ShapeError("hidden_widths[" + std::to_string(i) + "] must be positive");
    if (num_classes < 2)
        throw ShapeError("num_classes must be at least 2");
    (void)parameter_count();
}

std::string MlpArchitecture::describe() const {
    std::ostringstream os;
    auto w = widths();
    for (std::size_t i = 0; i < w.size(); ++i)
        os << (i ? "-" : "") << w[i];
    return os.str();
}

ParameterVector ParameterVector::zeros(const MlpArchitecture& arch) {
    arch.validate();
    return {arch, std::vector<double>(arch.parameter_count(), 0.0)};
}

bool ParameterVector::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

std::vector<DenseLayer> unflatten(const ParameterVector& params) {
    const auto w = params.arch.widths();
    if (params.values.size() != params.arch.parameter_count())
        throw ShapeError("parameter vector length " + std::to_string(params.values.size()) +
                         " != parameter_count " +
                         std::to_string(params.arch.parameter_count()));
    std::vector<DenseLayer> layers;
    auto it = params.values.begin();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        const std::size_t n_w = w[l] * w[l + 1];
        std::vector<double> wv(it, it + static_cast<std::ptrdiff_t>(n_w));
        it += static_cast<std::ptrdiff_t>(n_w);
        std::vector<double> bv(it, it + static_cast<std::ptrdiff_t>(w[l + 1]));
        it += static_cast<std::ptrdiff_t>(w[l + 1]);
        layers.push_back({Matrix(w[l], w[l + 1], std::move(wv)), std::move(bv)});
    }
    return layers;
}

ParameterVector flatten(const MlpArchitecture& arch, const std::vector<DenseLayer>& layers) {
    const auto w = arch.widths();
    if (layers.size() + 1 != w.size())
        throw ShapeError("layer count does not match architecture " + arch.describe());
    ParameterVector out{arch, {}};
    out.values.reserve(arch.parameter_count());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.weights.rows() != w[l] || layer.weights.cols() != w[l + 1] ||
            layer.bias.size() != w[l + 1])
            throw ShapeError("layer " + std::to_string(l) + " shape does not match " +
                             arch.describe());
        out.values.insert(out.values.end(), layer.weights.data().begin(),
                          layer.weights.data().end());
        out.values.insert(out.values.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

ParameterVector init_params(const MlpArchitecture& arch, Rng& rng) {
    arch.validate();
    const auto w = arch.widths();
    ParameterVector out{arch, {}};
    out.values.reserve(arch.parameter_count());
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(w[l] + w[l + 1]));
        for (std::size_t i = 0; i < w[l] * w[l + 1]; ++i)
            out.values.push_back(rng.uniform(-bound, bound));
        out.values.insert(out.values.end(), w[l + 1], 0.0);
    }
    return out;
}

namespace {

// out = in * W + b (W is fan_in x fan_out, stored flat at `weights`).
void dense_forward(const Matrix& in, const double* weights, const double* bias,
                   std::size_t fan_out, Matrix& out) {
    const std::size_t fan_in = in.cols();
    out = Matrix(in.rows(), fan_out);
    for (std::size_t r = 0; r < in.rows(); ++r) {
        double* o = out.row(r).data();
        std::copy_n(bias, fan_out, o);
        const double* x = in.row(r).data();
        for (std::size_t i = 0; i < fan_in; ++i) {
            const double a = x[i];
            if (a == 0.0)
                continue;
            const double* wrow = weights + i * fan_out;
            for (std::size_t j = 0; j < fan_out; ++j)
                o[j] += a * wrow[j];
        }
    }
}

void relu_inplace(Matrix& m) {
    for (double& x : m.data())
        x = x > 0.0 ? x : 0.0;
}

} // namespace

ForwardTrace forward_trace(const ParameterVector& params, const Matrix& features) {
    const auto& arch = params.arch;
    if (features.cols() != arch.input_dim)
        throw ShapeError("feature width " + std::to_string(features.cols()) +
                         " does not match input_dim " + std::to_string(arch.input_dim));
    if (params.values.size() != arch.parameter_count())
        throw ShapeError("parameter vector length " + std::to_string(params.values.size()) +
                         " != parameter_count " + std::to_string(arch.parameter_count()));
    const auto w = arch.widths();
    ForwardTrace trace;
    trace.layer_inputs.reserve(w.size() - 1);
    trace.layer_inputs.push_back(features);
    const double* p = params.values.data();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        const double* weights = p;
        const double* bias = p + w[l] * w[l + 1];
        p = bias + w[l + 1];
        Matrix out;
        dense_forward(trace.layer_inputs.back(), weights, bias, w[l + 1], out);
        if (l + 2 < w.size()) {
            relu_inplace(out);
            trace.layer_inputs.push_back(std::move(out));
        } else {
            trace.logits = std::move(out);
        }
    }
    return trace;
}

Matrix forward(const ParameterVector& params, const Matrix& features) {
    return forward_trace(params, features).logits;
}

std::vector<double> backward(const ParameterVector& params, const ForwardTrace& trace,
                             const Matrix& grad_logits) {
    const auto w = params.arch.widths();
    const std::size_t n_layers = w.size() - 1;
    if (trace.layer_inputs.size() != n_layers)
        throw ShapeError("forward trace does not match architecture " + params.arch.describe());
    check_same_shape(grad_logits, trace.logits, "backward");

    // Offsets of each layer's weight block in the flat vector.
    std::vector<std::size_t> offset(n_layers);
    std::size_t acc = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        offset[l] = acc;
        acc += w[l] * w[l + 1] + w[l + 1];
    }

    std::vector<double> grads(params.values.size(), 0.0);
    Matrix g = grad_logits;
    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& in = trace.layer_inputs[l];
        const std::size_t fan_in = w[l];
        const std::size_t fan_out = w[l + 1];
        double* gw = grads.data() + offset[l];
        double* gb = gw + fan_in * fan_out;
        for (std::size_t r = 0; r < in.rows(); ++r) {
            const double* x = in.row(r).data();
            const double* gr = g.row(r).data();
            for (std::size_t i = 0; i < fan_in; ++i) {
                const double a = x[i];
                if (a == 0.0)
                    continue;
                double* gwrow = gw + i * fan_out;
                for (std::size_t j = 0; j < fan_out; ++j)
                    gwrow[j] += a * gr[j];
            }
            for (std::size_t j = 0; j < fan_out; ++j)
                gb[j] += gr[j];
        }
        if (l == 0)
            break;
        // Propagate to the previous activation, masked by ReLU (in > 0).
        const double* weights = params.values.data() + offset[l];
        Matrix g_prev(in.rows(), fan_in);
        for (std::size_t r = 0; r < in.rows(); ++r) {
            const double* x = in.row(r).data();
            const double* gr = g.row(r).data();
            double* gp = g_prev.row(r).data();
            for (std::size_t i = 0; i < fan_in; ++i) {
                if (!(x[i] > 0.0))
                    continue;
                const double* wrow = weights + i * fan_out;
                double s = 0.0;
                for (std::size_t j = 0; j < fan_out; ++j)
                    s += wrow[j] * gr[j];
                gp[i] = s;
            }
        }
        g = std::move(g_prev);
    }
    return grads;
}

void log_softmax_t(std::span<const double> logits, double temperature, std::span<double> out) {
    check_temperature(temperature);
    if (logits.empty() || out.size() != logits.size())
        throw ShapeError("log_softmax_t: bad vector length");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = logits[c] / temperature;
        mx = std::max(mx, out[c]);
    }
    double s = 0.0;
    for (double z : out)
        s += std::exp(z - mx);
    const double lse = mx + std::log(s);
    for (double& z : out)
        z -= lse;
}

std::vector<double> softmax_t(std::span<const double> logits, double temperature) {
    check_temperature(temperature);
    if (logits.empty())
        throw ShapeError("softmax_t: empty logits");
    std::vector<double> p(logits.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = logits[c] / temperature;
        mx = std::max(mx, p[c]);
    }
    double s = 0.0;
    for (double& z : p) {
        z = std::exp(z - mx);
        s += z;
    }
    for (double& z : p)
        z /= s;
    return p;
}

LossAndGrad cross_entropy(const Matrix& logits, std::span<const Label> labels) {
    if (labels.size() != logits.rows())
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    if (logits.rows() == 0)
        throw ShapeError("cross_entropy: empty batch");
    const std::size_t C = logits.cols();
    const double inv_b = 1.0 / static_cast<double>(logits.rows());
    LossAndGrad out{0.0, Matrix(logits.rows(), C)};
    std::vector<double> logp(C);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (labels[r] >= C)
            throw DomainError("label " + std::to_string(labels[r]) + " out of range for " +
                              std::to_string(C) + " classes");
        log_softmax_t(logits.row(r), 1.0, logp);
        out.loss -= logp[labels[r]];
        auto g = out.grad.row(r);
        for (std::size_t c = 0; c < C; ++c)
            g[c] = (std::exp(logp[c]) - (c == labels[r] ? 1.0 : 0.0)) * inv_b;
    }
    out.loss *= inv_b;
    return out;
}

LossAndGrad kd_kl_loss(const Matrix& teacher_logits, const Matrix& student_logits,
                       double temperature) {
    check_temperature(temperature);
    check_same_shape(teacher_logits, student_logits, "kd_kl_loss");
    if (student_logits.rows() == 0)
        throw ShapeError("kd_kl_loss: empty batch");
    const std::size_t C = student_logits.cols();
    const double inv_b = 1.0 / static_cast<double>(student_logits.rows());
    // d/ds [T^2 KL(p||q)] = T (q - p)
    const double gscale = temperature * inv_b;
    LossAndGrad out{0.0, Matrix(student_logits.rows(), C)};
    std::vector<double> logp(C), logq(C);
    for (std::size_t r = 0; r < student_logits.rows(); ++r) {
        log_softmax_t(teacher_logits.row(r), temperature, logp);
        log_softmax_t(student_logits.row(r), temperature, logq);
        double kl = 0.0;
        auto g = out.grad.row(r);
        for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(logp[c]);
            kl += p * (logp[c] - logq[c]);
            g[c] = (std::exp(logq[c]) - p) * gscale;
        }
        out.loss += kl;
    }
    out.loss *= temperature * temperature * inv_b;
    return out;
}

AdamState AdamState::init(std::size_t n, const AdamConfig& hp) {
    return {hp, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || state.m.size() != params.size() ||
        state.v.size() != params.size())
        throw ShapeError("adam_step: length mismatch (params " + std::to_string(params.size()) +
                         ", grads " + std::to_string(grads.size()) + ", state " +
                         std::to_string(state.m.size()) + ")");
    const auto& hp = state.hp;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(hp.beta1, t);
    const double bc2 = 1.0 - std::pow(hp.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        double step = m_hat / (std::sqrt(v_hat) + hp.eps);
        if (hp.weight_decay != 0.0)
            step += hp.weight_decay * params[i];
        params[i] -= hp.lr * step;
    }
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty())
        throw ShapeError("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best])
            best = i;
    return best;
}

} // namespace takfl::nn
