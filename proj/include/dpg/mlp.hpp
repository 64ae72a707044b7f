#ifndef DPG_MLP_HPP
#define DPG_MLP_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "dpg/rng.hpp"

namespace dpg::nn {

enum class Activation { Identity, Tanh, Gelu };

struct LayerSpec {
    int input_dim = 0;
    int output_dim = 0;
    Activation activation = Activation::Identity;
};

using Shape = std::vector<LayerSpec>;

// Throws config_error on non-positive dims or broken layer chaining.
void validate_shape(const Shape& shape);
std::size_t param_count(const Shape& shape);

// Convenience: hidden widths + explicit output layer activation.
Shape make_shape(int input_dim, const std::vector<int>& hidden, int output_dim,
                 Activation hidden_act, Activation output_act);

// Exact GELU, x * Phi(x) with the erf-based normal CDF (std::erf), and its
// analytic derivative Phi(x) + x * pdf(x). Both are C-infinity.
double gelu(double x);
double gelu_prime(double x);

// Flat parameter vector over a fixed layer shape. Layout is layer-major:
// for each layer, the weight matrix row-major (output_dim x input_dim),
// then the bias vector. This order is also the wire serialization order.
//
// Any mutation assigns a fresh generation id; tapes record the id they were
// built against so gradients can never be taken through stale caches.
class MlpParams {
public:
    MlpParams() = default;

    static MlpParams zeros(Shape shape);
    // Per layer, weights and biases uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    static MlpParams random_init(Shape shape, Rng& rng);

    const Shape& shape() const { return shape_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t param_count() const { return values_.size(); }
    std::uint64_t generation() const { return generation_; }

    // Replaces the whole vector. Length and finiteness are enforced.
    void set_values(std::vector<double> values);

    // values += coeff * direction. Throws stability_error if any entry
    // leaves the finite range.
    void axpy(double coeff, std::span<const double> direction);

    // this = (1 - tau) * this + tau * online  (target-network tracking).
    void soft_update_from(const MlpParams& online, double tau);

    double l2_norm() const;

private:
    void assign_generation();
    void check_finite() const;

    Shape shape_;
    std::vector<double> values_;
    std::uint64_t generation_ = 0;
};

// Per-layer intermediates from one forward pass. Reusable across calls;
// buffers are only grown, never shrunk.
struct EvalTape {
    std::uint64_t params_generation = ~0ull;
    std::vector<std::vector<double>> inputs;   // input vector of each layer
    std::vector<std::vector<double>> preacts;  // affine outputs z of each layer
    std::vector<double> output;                // activation of the last layer
};

// output = composition of affine + activation per layer.
// Throws config_error if input length != first layer input_dim.
void forward(const MlpParams& params, std::span<const double> input, EvalTape& tape);

// Exact reverse-mode gradients of <out_grad, output> with respect to the
// parameters and the input. The tape must come from `forward` on the same
// generation of `params` (usage_error otherwise). Output vectors are
// overwritten and sized to param_count / input dim.
void backward(const MlpParams& params, const EvalTape& tape, std::span<const double> out_grad,
              std::vector<double>& param_grad, std::vector<double>& input_grad);

// Per-dimension action interval; lower < upper enforced at construction.
struct ActionBounds {
    std::vector<double> lo;
    std::vector<double> hi;

    ActionBounds() = default;
    ActionBounds(std::vector<double> lo_, std::vector<double> hi_);
    static ActionBounds uniform(int dims, double lo, double hi);

    int dims() const { return static_cast<int>(lo.size()); }
    double halfwidth(int d) const { return 0.5 * (hi[d] - lo[d]); }
    double midpoint(int d) const { return 0.5 * (hi[d] + lo[d]); }
    void clip(std::span<double> action) const;
};

// Policy head: the net's tanh output, affinely rescaled per dimension from
// [-1,1] onto the bound interval. Requires the final activation to be Tanh.
void actor_forward(const MlpParams& params, std::span<const double> obs,
                   const ActionBounds& bounds, EvalTape& tape, std::vector<double>& action);

// Chain rule through the rescaling: param/input gradients of
// <action_grad, bounded_action>.
void actor_backward(const MlpParams& params, const EvalTape& tape, const ActionBounds& bounds,
                    std::span<const double> action_grad, std::vector<double>& param_grad,
                    std::vector<double>& input_grad, std::vector<double>& scratch);

} // namespace dpg::nn

#endif
