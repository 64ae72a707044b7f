#include "dpg/mlp.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "dpg/errors.hpp"

namespace dpg::nn {

namespace {

std::atomic<std::uint64_t> g_generation{1};

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double activate(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Tanh: return std::tanh(z);
        case Activation::Gelu: return gelu(z);
    }
    return z;
}

double activate_prime(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::Tanh: {
            double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::Gelu: return gelu_prime(z);
    }
    return 1.0;
}

} // namespace

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_prime(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw config_error("mlp shape must have at least one layer");
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (shape[k].input_dim < 1 || shape[k].output_dim < 1)
            throw config_error("mlp layer " + std::to_string(k) + " has non-positive dimension");
        if (k + 1 < shape.size() && shape[k].output_dim != shape[k + 1].input_dim)
            throw config_error("mlp layers " + std::to_string(k) + "/" + std::to_string(k + 1) +
                               " do not chain");
    }
}

std::size_t param_count(const Shape& shape) {
    std::size_t n = 0;
    for (const auto& l : shape)
        n += static_cast<std::size_t>(l.input_dim) * l.output_dim + l.output_dim;
    return n;
}

Shape make_shape(int input_dim, const std::vector<int>& hidden, int output_dim,
                 Activation hidden_act, Activation output_act) {
    Shape shape;
    int in = input_dim;
    for (int w : hidden) {
        shape.push_back({in, w, hidden_act});
        in = w;
    }
    shape.push_back({in, output_dim, output_act});
    validate_shape(shape);
    return shape;
}

void MlpParams::assign_generation() {
    generation_ = g_generation.fetch_add(1, std::memory_order_relaxed);
}

void MlpParams::check_finite() const {
    for (double v : values_)
        if (!std::isfinite(v)) throw stability_error("mlp parameters are no longer finite");
}

MlpParams MlpParams::zeros(Shape shape) {
    validate_shape(shape);
    MlpParams p;
    p.values_.assign(nn::param_count(shape), 0.0);
    p.shape_ = std::move(shape);
    p.assign_generation();
    return p;
}

MlpParams MlpParams::random_init(Shape shape, Rng& rng) {
    validate_shape(shape);
    MlpParams p;
    p.shape_ = std::move(shape);
    p.values_.reserve(nn::param_count(p.shape_));
    for (const auto& l : p.shape_) {
        double bound = 1.0 / std::sqrt(static_cast<double>(l.input_dim));
        std::size_t n = static_cast<std::size_t>(l.input_dim) * l.output_dim + l.output_dim;
        for (std::size_t k = 0; k < n; ++k) p.values_.push_back(rng.uniform(-bound, bound));
    }
    p.assign_generation();
    return p;
}

void MlpParams::set_values(std::vector<double> values) {
    if (values.size() != nn::param_count(shape_))
        throw config_error("parameter vector length does not match shape");
    values_ = std::move(values);
    check_finite();
    assign_generation();
}

void MlpParams::axpy(double coeff, std::span<const double> direction) {
    if (direction.size() != values_.size())
        throw config_error("update direction length does not match parameter count");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += coeff * direction[k];
    check_finite();
    assign_generation();
}

void MlpParams::soft_update_from(const MlpParams& online, double tau) {
    if (online.values_.size() != values_.size())
        throw config_error("soft update between mismatched shapes");
    for (std::size_t k = 0; k < values_.size(); ++k)
        values_[k] = (1.0 - tau) * values_[k] + tau * online.values_[k];
    check_finite();
    assign_generation();
}

double MlpParams::l2_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

void forward(const MlpParams& params, std::span<const double> input, EvalTape& tape) {
    const Shape& shape = params.shape();
    if (static_cast<int>(input.size()) != shape.front().input_dim)
        throw config_error("forward input length " + std::to_string(input.size()) +
                           " does not match first layer input_dim " +
                           std::to_string(shape.front().input_dim));

    const std::size_t L = shape.size();
    tape.inputs.resize(L);
    tape.preacts.resize(L);

    const double* values = params.values().data();
    std::size_t off = 0;
    tape.inputs[0].assign(input.begin(), input.end());

    for (std::size_t k = 0; k < L; ++k) {
        const auto& l = shape[k];
        const double* x = tape.inputs[k].data();
        auto& z = tape.preacts[k];
        z.resize(static_cast<std::size_t>(l.output_dim));

        const double* w = values + off;
        const double* b = w + static_cast<std::size_t>(l.input_dim) * l.output_dim;
        for (int r = 0; r < l.output_dim; ++r) {
            const double* row = w + static_cast<std::size_t>(r) * l.input_dim;
            double acc = b[r];
            for (int c = 0; c < l.input_dim; ++c) acc += row[c] * x[c];
            z[static_cast<std::size_t>(r)] = acc;
        }

        // Activations of the last layer land in tape.output; hidden ones
        // become the next layer's input.
        auto& a = (k + 1 == L) ? tape.output : tape.inputs[k + 1];
        a.resize(z.size());
        for (std::size_t r = 0; r < z.size(); ++r) a[r] = activate(l.activation, z[r]);
        off += static_cast<std::size_t>(l.input_dim) * l.output_dim + l.output_dim;
    }

    tape.params_generation = params.generation();
}

void backward(const MlpParams& params, const EvalTape& tape, std::span<const double> out_grad,
              std::vector<double>& param_grad, std::vector<double>& input_grad) {
    if (tape.params_generation != params.generation())
        throw usage_error("tape is stale for these parameters");
    const Shape& shape = params.shape();
    const std::size_t L = shape.size();
    if (static_cast<int>(out_grad.size()) != shape.back().output_dim)
        throw config_error("out_grad length does not match final output_dim");

    param_grad.assign(params.param_count(), 0.0);

    // Layer value offsets, front to back.
    std::vector<std::size_t> offsets(L);
    std::size_t off = 0;
    for (std::size_t k = 0; k < L; ++k) {
        offsets[k] = off;
        off += static_cast<std::size_t>(shape[k].input_dim) * shape[k].output_dim +
               shape[k].output_dim;
    }

    std::vector<double> dz;
    std::vector<double> dx(out_grad.begin(), out_grad.end()); // grad wrt layer output
    const double* values = params.values().data();

    for (std::size_t k = L; k-- > 0;) {
        const auto& l = shape[k];
        const auto& z = tape.preacts[k];
        const auto& x = tape.inputs[k];

        dz.resize(z.size());
        for (std::size_t r = 0; r < z.size(); ++r)
            dz[r] = dx[r] * activate_prime(l.activation, z[r]);

        double* wg = param_grad.data() + offsets[k];
        double* bg = wg + static_cast<std::size_t>(l.input_dim) * l.output_dim;
        for (int r = 0; r < l.output_dim; ++r) {
            double g = dz[static_cast<std::size_t>(r)];
            double* row = wg + static_cast<std::size_t>(r) * l.input_dim;
            for (int c = 0; c < l.input_dim; ++c) row[c] = g * x[static_cast<std::size_t>(c)];
            bg[r] = g;
        }

        dx.assign(static_cast<std::size_t>(l.input_dim), 0.0);
        const double* w = values + offsets[k];
        for (int r = 0; r < l.output_dim; ++r) {
            double g = dz[static_cast<std::size_t>(r)];
            const double* row = w + static_cast<std::size_t>(r) * l.input_dim;
            for (int c = 0; c < l.input_dim; ++c) dx[static_cast<std::size_t>(c)] += g * row[c];
        }
    }

    input_grad = std::move(dx);
}

ActionBounds::ActionBounds(std::vector<double> lo_, std::vector<double> hi_)
    : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw config_error("action bounds lo/hi length mismatch");
    for (std::size_t d = 0; d < lo.size(); ++d)
        if (!(lo[d] < hi[d])) throw config_error("action bound lower >= upper");
}

ActionBounds ActionBounds::uniform(int dims, double lo, double hi) {
    return ActionBounds(std::vector<double>(static_cast<std::size_t>(dims), lo),
                        std::vector<double>(static_cast<std::size_t>(dims), hi));
}

void ActionBounds::clip(std::span<double> action) const {
    for (std::size_t d = 0; d < action.size(); ++d) {
        if (action[d] < lo[d]) action[d] = lo[d];
        if (action[d] > hi[d]) action[d] = hi[d];
    }
}

void actor_forward(const MlpParams& params, std::span<const double> obs,
                   const ActionBounds& bounds, EvalTape& tape, std::vector<double>& action) {
    if (params.shape().back().activation != Activation::Tanh)
        throw config_error("actor net must end in a tanh layer");
    if (params.shape().back().output_dim != bounds.dims())
        throw config_error("actor output dim does not match bounds");
    forward(params, obs, tape);
    action.resize(tape.output.size());
    for (int d = 0; d < bounds.dims(); ++d) {
        double t = tape.output[static_cast<std::size_t>(d)];
        action[static_cast<std::size_t>(d)] = bounds.lo[static_cast<std::size_t>(d)] +
                                              (t + 1.0) * bounds.halfwidth(d);
    }
}

void actor_backward(const MlpParams& params, const EvalTape& tape, const ActionBounds& bounds,
                    std::span<const double> action_grad, std::vector<double>& param_grad,
                    std::vector<double>& input_grad, std::vector<double>& scratch) {
    scratch.resize(action_grad.size());
    for (std::size_t d = 0; d < action_grad.size(); ++d)
        scratch[d] = action_grad[d] * bounds.halfwidth(static_cast<int>(d));
    backward(params, tape, scratch, param_grad, input_grad);
}

} // namespace dpg::nn
