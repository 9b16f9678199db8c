#include "vidtune/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "vidtune/rng.hpp"

namespace vidtune {

std::vector<double> timestep_encoding(TimeIndex t, int dims) {
    if (dims < 0) throw std::invalid_argument("timestep_encoding: dims must be >= 0");
    std::vector<double> enc(static_cast<std::size_t>(dims));
    double r = t.T > 0 ? static_cast<double>(t.t) / t.T : 0.0;
    double freq = M_PI;
    for (int i = 0; i + 1 < dims; i += 2) {
        enc[i] = std::sin(r * freq);
        enc[i + 1] = std::cos(r * freq);
        freq *= 2.0;
    }
    if (dims % 2 == 1) enc[dims - 1] = std::sin(r * freq);
    return enc;
}

std::vector<double> position_encoding(int frame_index, int dims) {
    if (dims < 0) throw std::invalid_argument("position_encoding: dims must be >= 0");
    std::vector<double> enc(static_cast<std::size_t>(dims));
    for (int i = 0; i + 1 < dims; i += 2) {
        double w = std::pow(10000.0, -static_cast<double>(i) / dims);
        enc[i] = std::sin(frame_index * w);
        enc[i + 1] = std::cos(frame_index * w);
    }
    if (dims % 2 == 1)
        enc[dims - 1] = std::sin(frame_index * std::pow(10000.0, -static_cast<double>(dims - 1) / dims));
    return enc;
}

std::vector<double> embedding_from_text(const std::string& text, int dims, std::uint64_t seed) {
    if (dims < 0) throw std::invalid_argument("embedding_from_text: dims must be >= 0");
    Rng rng(derive_seed(seed, fnv1a64(text)));
    std::vector<double> v(static_cast<std::size_t>(dims));
    for (auto& x : v) x = rng.gaussian();
    return v;
}

DenoiserModel::DenoiserModel(ModelDims dims, std::vector<double> params)
    : dims_(dims), params_(std::move(params)) {
    if (dims_.height <= 0 || dims_.width <= 0 || dims_.channels <= 0 || dims_.hidden <= 0)
        throw std::invalid_argument("DenoiserModel: dimensions must be positive");
    if (dims_.time_dims < 0 || dims_.pos_dims < 0 || dims_.h_dims < 0 || dims_.c_dims < 0)
        throw std::invalid_argument("DenoiserModel: encoding dims must be >= 0");
    if (params_.size() != dims_.param_count())
        throw std::invalid_argument("DenoiserModel: parameter count does not match dims");
    for (double p : params_)
        if (!std::isfinite(p))
            throw std::invalid_argument("DenoiserModel: parameters must be finite");
}

std::size_t DenoiserModel::b1_off() const {
    return static_cast<std::size_t>(dims_.hidden) * dims_.input_size();
}
std::size_t DenoiserModel::w2_off() const { return b1_off() + dims_.hidden; }
std::size_t DenoiserModel::b2_off() const {
    return w2_off() + static_cast<std::size_t>(dims_.hidden) * dims_.hidden;
}
std::size_t DenoiserModel::w3_off() const { return b2_off() + dims_.hidden; }
std::size_t DenoiserModel::b3_off() const {
    return w3_off() + static_cast<std::size_t>(dims_.frame_size()) * dims_.hidden;
}

DenoiserModel init_model(ModelDims dims, std::uint64_t seed) {
    if (dims.height <= 0 || dims.width <= 0 || dims.channels <= 0 || dims.hidden <= 0)
        throw std::invalid_argument("init_model: dimensions must be positive");
    std::vector<double> params(dims.param_count(), 0.0);
    Rng rng(seed);

    auto fill_uniform = [&](std::size_t off, std::size_t count, int fan_in) {
        double bound = std::sqrt(3.0 / fan_in);
        for (std::size_t i = 0; i < count; ++i)
            params[off + i] = (2.0 * rng.uniform() - 1.0) * bound;
    };

    std::size_t in = dims.input_size(), hid = dims.hidden, out = dims.frame_size();
    std::size_t w1 = 0;
    std::size_t b1 = w1 + hid * in;
    std::size_t w2 = b1 + hid;
    std::size_t w3 = w2 + hid * hid + hid;
    fill_uniform(w1, hid * in, dims.input_size());
    fill_uniform(w2, hid * hid, dims.hidden);
    fill_uniform(w3, out * hid, dims.hidden);
    // biases stay zero
    return DenoiserModel(dims, std::move(params));
}

namespace detail {

std::vector<double> build_input(const ModelDims& dims, const LatentFrame& xt, TimeIndex t,
                                const ConditioningEmbedding& emb, int frame_index) {
    if (xt.height() != dims.height || xt.width() != dims.width || xt.channels() != dims.channels)
        throw std::invalid_argument("predict_noise: frame shape does not match model");
    if (static_cast<int>(emb.h.size()) != dims.h_dims ||
        static_cast<int>(emb.c.size()) != dims.c_dims)
        throw std::invalid_argument("predict_noise: embedding dims do not match model");

    std::vector<double> input;
    input.reserve(static_cast<std::size_t>(dims.input_size()));
    input.insert(input.end(), xt.values().begin(), xt.values().end());
    auto te = timestep_encoding(t, dims.time_dims);
    input.insert(input.end(), te.begin(), te.end());
    auto pe = position_encoding(frame_index, dims.pos_dims);
    input.insert(input.end(), pe.begin(), pe.end());
    input.insert(input.end(), emb.h.begin(), emb.h.end());
    input.insert(input.end(), emb.c.begin(), emb.c.end());
    return input;
}

namespace {

// y = W x + b, W stored row-major [rows x cols]
void affine(const double* w, const double* b, std::span<const double> x, std::size_t rows,
            std::size_t cols, std::vector<double>& y) {
    y.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

}  // namespace

void forward(const DenoiserModel& model, std::span<const double> input, ForwardCache& cache) {
    const ModelDims& d = model.dims();
    const double* p = model.params().data();
    std::size_t in = d.input_size(), hid = d.hidden, out = d.frame_size();

    cache.input.assign(input.begin(), input.end());
    affine(p + model.w1_off(), p + model.b1_off(), cache.input, hid, in, cache.a1);
    for (auto& v : cache.a1) v = std::tanh(v);
    affine(p + model.w2_off(), p + model.b2_off(), cache.a1, hid, hid, cache.a2);
    for (auto& v : cache.a2) v = std::tanh(v);
    affine(p + model.w3_off(), p + model.b3_off(), cache.a2, out, hid, cache.out);
}

double weighted_residual_backward(const DenoiserModel& model, const ForwardCache& cache,
                                  const LatentFrame& target, std::span<const double> sq_weights,
                                  double inv_batch, std::span<double> grad) {
    const ModelDims& d = model.dims();
    const double* p = model.params().data();
    std::size_t in = d.input_size(), hid = d.hidden, out = d.frame_size();

    // loss = inv_batch * sum_i sqw_i * (target_i - out_i)^2
    double loss = 0.0;
    std::vector<double> dout(out);
    for (std::size_t i = 0; i < out; ++i) {
        double r = target[i] - cache.out[i];
        loss += sq_weights[i] * r * r;
        dout[i] = -2.0 * inv_batch * sq_weights[i] * r;
    }
    loss *= inv_batch;

    if (!grad.empty()) {
        double* gw3 = grad.data() + model.w3_off();
        double* gb3 = grad.data() + model.b3_off();
        std::vector<double> da2(hid, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            double g = dout[r];
            gb3[r] += g;
            const double* w3r = p + model.w3_off() + r * hid;
            double* gw3r = gw3 + r * hid;
            for (std::size_t c = 0; c < hid; ++c) {
                gw3r[c] += g * cache.a2[c];
                da2[c] += g * w3r[c];
            }
        }
        // through tanh of layer 2
        for (std::size_t i = 0; i < hid; ++i) da2[i] *= 1.0 - cache.a2[i] * cache.a2[i];

        double* gw2 = grad.data() + model.w2_off();
        double* gb2 = grad.data() + model.b2_off();
        std::vector<double> da1(hid, 0.0);
        for (std::size_t r = 0; r < hid; ++r) {
            double g = da2[r];
            gb2[r] += g;
            const double* w2r = p + model.w2_off() + r * hid;
            double* gw2r = gw2 + r * hid;
            for (std::size_t c = 0; c < hid; ++c) {
                gw2r[c] += g * cache.a1[c];
                da1[c] += g * w2r[c];
            }
        }
        for (std::size_t i = 0; i < hid; ++i) da1[i] *= 1.0 - cache.a1[i] * cache.a1[i];

        double* gw1 = grad.data() + model.w1_off();
        double* gb1 = grad.data() + model.b1_off();
        for (std::size_t r = 0; r < hid; ++r) {
            double g = da1[r];
            gb1[r] += g;
            double* gw1r = gw1 + r * in;
            for (std::size_t c = 0; c < in; ++c) gw1r[c] += g * cache.input[c];
        }
    }
    return loss;
}

}  // namespace detail

LatentFrame predict_noise(const DenoiserModel& model, const LatentFrame& xt, TimeIndex t,
                          const ConditioningEmbedding& emb, int frame_index) {
    detail::ForwardCache cache;
    detail::forward(model, detail::build_input(model.dims(), xt, t, emb, frame_index), cache);
    return LatentFrame(xt.height(), xt.width(), xt.channels(), std::move(cache.out));
}

GradientResult loss_gradients(const DenoiserModel& model, std::span<const LossSample> batch) {
    if (batch.empty())
        throw std::invalid_argument("loss_gradients: batch must be nonempty");

    const ModelDims& d = model.dims();
    GradientResult result;
    result.grad.assign(model.params().size(), 0.0);
    double inv_batch = 1.0 / static_cast<double>(batch.size());

    detail::ForwardCache cache;
    std::vector<double> sqw(static_cast<std::size_t>(d.frame_size()));
    for (const LossSample& s : batch) {
        if (!s.target_noise.same_shape(s.xt))
            throw std::invalid_argument("loss_gradients: target shape mismatch");
        if (!s.mask.matches_frame(s.xt))
            throw std::invalid_argument("loss_gradients: mask shape mismatch");
        detail::forward(model, detail::build_input(d, s.xt, s.t, s.emb, s.frame_index), cache);
        std::size_t i = 0;
        for (int y = 0; y < s.xt.height(); ++y)
            for (int x = 0; x < s.xt.width(); ++x) {
                double m = s.mask.at(y, x);
                for (int c = 0; c < s.xt.channels(); ++c) sqw[i++] = m * m;
            }
        result.loss += detail::weighted_residual_backward(model, cache, s.target_noise, sqw,
                                                          inv_batch, result.grad);
    }
    return result;
}

void apply_update(DenoiserModel& model, std::span<const double> grad, double learning_rate) {
    if (grad.size() != model.params().size())
        throw std::invalid_argument("apply_update: gradient size does not match parameters");
    for (double g : grad)
        if (!std::isfinite(g))
            throw std::invalid_argument("apply_update: gradients must be finite");
    auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i] -= learning_rate * grad[i];
}

namespace {

constexpr char kCkptMagic[6] = {'V', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint16_t kCkptVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void save_checkpoint(const DenoiserModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kCkptMagic, sizeof(kCkptMagic));
    write_le<std::uint16_t>(os, kCkptVersion);
    const ModelDims& d = model.dims();
    for (int v : {d.height, d.width, d.channels, d.hidden, d.time_dims, d.pos_dims, d.h_dims,
                  d.c_dims})
        write_le<std::int32_t>(os, v);
    write_le<std::uint64_t>(os, model.params().size());
    for (double p : model.params()) write_le<double>(os, p);
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

DenoiserModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[6];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    auto version = read_le<std::uint16_t>(is);
    if (version != kCkptVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    ModelDims d;
    d.height = read_le<std::int32_t>(is);
    d.width = read_le<std::int32_t>(is);
    d.channels = read_le<std::int32_t>(is);
    d.hidden = read_le<std::int32_t>(is);
    d.time_dims = read_le<std::int32_t>(is);
    d.pos_dims = read_le<std::int32_t>(is);
    d.h_dims = read_le<std::int32_t>(is);
    d.c_dims = read_le<std::int32_t>(is);
    auto count = read_le<std::uint64_t>(is);
    if (count != d.param_count())
        throw std::runtime_error("checkpoint: parameter count does not match header in " + path);
    std::vector<double> params(count);
    for (auto& p : params) p = read_le<double>(is);
    return DenoiserModel(d, std::move(params));
}

}  // namespace vidtune
