#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vidtune/frame.hpp"
#include "vidtune/schedule.hpp"

namespace vidtune {

/// Prompt and condition surrogates: fixed-length real vectors that stand in
/// for text-encoder outputs.
struct ConditioningEmbedding {
    std::vector<double> h;
    std::vector<double> c;
};

/// Dimensions of the noise-prediction network. The input layer sees the
/// flattened frame followed by the timestep encoding, the frame-position
/// encoding, h, and c, in that order.
struct ModelDims {
    int height = 0;
    int width = 0;
    int channels = 0;
    int hidden = 0;
    int time_dims = 0;
    int pos_dims = 0;
    int h_dims = 0;
    int c_dims = 0;

    int frame_size() const { return height * width * channels; }
    int input_size() const { return frame_size() + time_dims + pos_dims + h_dims + c_dims; }

    /// Two tanh hidden layers of equal width, linear output back to frame
    /// shape: W1[hidden x input] b1 W2[hidden x hidden] b2 W3[out x hidden] b3.
    std::size_t param_count() const {
        std::size_t in = input_size(), hid = hidden, out = frame_size();
        return hid * in + hid + hid * hid + hid + out * hid + out;
    }

    bool operator==(const ModelDims&) const = default;
};

/// Sinusoidal features of t / T: pairs sin(r * pi * 2^i), cos(r * pi * 2^i).
std::vector<double> timestep_encoding(TimeIndex t, int dims);

/// Sinusoidal features of an absolute frame index, base-10000 geometric
/// frequencies. Index 0 is used for single-frame work.
std::vector<double> position_encoding(int frame_index, int dims);

/// Deterministic text surrogate: FNV-1a hash of the string mixed with the
/// seed picks a stream, entries are standard normal.
std::vector<double> embedding_from_text(const std::string& text, int dims, std::uint64_t seed);

/// Noise-prediction network: parameters stored as one flat array in the
/// layout documented on ModelDims::param_count.
class DenoiserModel {
public:
    DenoiserModel(ModelDims dims, std::vector<double> params);

    const ModelDims& dims() const { return dims_; }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }

    // offsets of each block within the flat parameter array
    std::size_t w1_off() const { return 0; }
    std::size_t b1_off() const;
    std::size_t w2_off() const;
    std::size_t b2_off() const;
    std::size_t w3_off() const;
    std::size_t b3_off() const;

private:
    ModelDims dims_;
    std::vector<double> params_;
};

/// Fresh model with weights uniform on +-sqrt(3 / fan_in) (variance 1/fan_in)
/// and zero biases. Same seed, same model.
DenoiserModel init_model(ModelDims dims, std::uint64_t seed);

/// Deterministic forward pass; output has the frame shape.
LatentFrame predict_noise(const DenoiserModel& model, const LatentFrame& xt, TimeIndex t,
                          const ConditioningEmbedding& emb, int frame_index = 0);

/// One training sample. The loss contribution is the squared norm of the
/// Hadamard-masked residual: sum_i (mask_i * (target_i - pred_i))^2.
/// An all-ones mask gives the plain squared error.
struct LossSample {
    LatentFrame xt;
    TimeIndex t;
    ConditioningEmbedding emb;
    LatentFrame target_noise;
    PixelGrid mask;
    int frame_index = 0;
};

struct GradientResult {
    std::vector<double> grad;  // same flat layout as the parameters
    double loss = 0.0;
};

/// Exact analytic gradient of the mean masked squared error over the batch.
GradientResult loss_gradients(const DenoiserModel& model, std::span<const LossSample> batch);

/// Plain gradient descent step: params -= lr * grad.
void apply_update(DenoiserModel& model, std::span<const double> grad, double learning_rate);

/// Little-endian binary checkpoint with versioned header; round trips
/// bit-exactly. Layout documented in docs/formats.md.
void save_checkpoint(const DenoiserModel& model, const std::string& path);
DenoiserModel load_checkpoint(const std::string& path);

namespace detail {

/// Forward activations kept for backprop.
struct ForwardCache {
    std::vector<double> input;
    std::vector<double> a1;
    std::vector<double> a2;
    std::vector<double> out;
};

std::vector<double> build_input(const ModelDims& dims, const LatentFrame& xt, TimeIndex t,
                                const ConditioningEmbedding& emb, int frame_index);
void forward(const DenoiserModel& model, std::span<const double> input, ForwardCache& cache);

/// Squared-weight variant shared by the plain, masked, and combined losses:
/// per-sample loss is sum_i sqw_i * (target_i - out_i)^2 and the batch loss
/// is the mean. Gradients are accumulated into grad (pre-sized, zeroed by the
/// caller); scale 1/batch is applied inside.
double weighted_residual_backward(const DenoiserModel& model, const ForwardCache& cache,
                                  const LatentFrame& target, std::span<const double> sq_weights,
                                  double inv_batch, std::span<double> grad);

}  // namespace detail

}  // namespace vidtune
