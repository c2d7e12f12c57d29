#include "tomtalker/perception.hpp"

#include "tomtalker/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace tomtalker::perception {

namespace {

std::string shape_string(const std::vector<std::size_t>& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

std::size_t product(const std::vector<std::size_t>& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_channels(std::span<const double> v, std::size_t channels, const char* what)
{
    if (v.size() != channels)
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has " + std::to_string(v.size()) +
                                                      " entries for " + std::to_string(channels) + " channels");
}

std::size_t pad_before(std::size_t k, Padding padding)
{
    if (padding == Padding::Valid)
        return 0;
    if (k % 2 == 0)
        throw Error(ErrorCode::InvalidParams, "same padding needs an odd kernel size");
    return k / 2;
}

std::size_t out_extent(std::size_t in, std::size_t k, Padding padding)
{
    if (padding == Padding::Same)
        return in;
    if (in < k)
        throw Error(ErrorCode::DimensionMismatch, "kernel larger than input");
    return in - k + 1;
}

} // namespace

Tensor::Tensor(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels), values_(height * width * channels, fill)
{
}

Tensor::Tensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values))
{
    if (values_.size() != height * width * channels)
        throw Error(ErrorCode::DimensionMismatch, "tensor value count does not match its shape");
}

bool Tensor::all_finite() const
{
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor batchnorm_infer(const Tensor& x, std::span<const double> mean, std::span<const double> variance,
                       std::span<const double> gamma, std::span<const double> beta, double eps)
{
    const auto c = x.channels();
    require_channels(mean, c, "BN mean");
    require_channels(variance, c, "BN variance");
    require_channels(gamma, c, "BN gamma");
    require_channels(beta, c, "BN beta");
    std::vector<double> scale(c);
    for (std::size_t k = 0; k < c; ++k) {
        if (!(variance[k] >= 0.0))
            throw Error(ErrorCode::InvalidParams, "BN variance must be non-negative");
        if (!(variance[k] + eps > 0.0))
            throw Error(ErrorCode::InvalidParams, "BN variance plus epsilon must be positive");
        scale[k] = 1.0 / std::sqrt(variance[k] + eps);
    }
    Tensor y(x.height(), x.width(), c);
    auto in = x.values();
    auto out = y.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        const auto k = i % c;
        out[i] = gamma[k] * ((in[i] - mean[k]) * scale[k]) + beta[k];
    }
    return y;
}

Tensor depthwise_conv(const Tensor& input, const Tensor& kernels, Padding padding)
{
    const auto k = kernels.height();
    if (kernels.width() != k || kernels.channels() != input.channels() || k == 0)
        throw Error(ErrorCode::DimensionMismatch, "depthwise kernels must be K x K x C_in");
    const auto pad = pad_before(k, padding);
    const auto oh = out_extent(input.height(), k, padding);
    const auto ow = out_extent(input.width(), k, padding);
    const auto c = input.channels();
    Tensor out(oh, ow, c);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            for (std::size_t ky = 0; ky < k; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(input.height()))
                    continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(input.width()))
                        continue;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        out.at(y, x, ch) += input.at(iy, ix, ch) * kernels.at(ky, kx, ch);
                }
            }
        }
    }
    return out;
}

Tensor pointwise_conv(const Tensor& input, std::span<const double> weights, std::size_t out_channels)
{
    const auto c_in = input.channels();
    if (weights.size() != c_in * out_channels || out_channels == 0)
        throw Error(ErrorCode::DimensionMismatch, "pointwise weights must be C_in x C_out");
    Tensor out(input.height(), input.width(), out_channels);
    const auto in = input.values();
    auto dst = out.values();
    const auto pixels = input.height() * input.width();
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* src = in.data() + p * c_in;
        double* o = dst.data() + p * out_channels;
        for (std::size_t i = 0; i < c_in; ++i) {
            const double v = src[i];
            const double* row = weights.data() + i * out_channels;
            for (std::size_t j = 0; j < out_channels; ++j)
                o[j] += v * row[j];
        }
    }
    return out;
}

Tensor depthwise_separable_conv(const Tensor& input, const Tensor& depthwise_kernels,
                                std::span<const double> pointwise_weights, std::size_t out_channels,
                                Padding padding)
{
    return pointwise_conv(depthwise_conv(input, depthwise_kernels, padding), pointwise_weights, out_channels);
}

Tensor conv2d(const Tensor& input, std::span<const double> kernels, std::size_t kernel_size,
              std::size_t out_channels, Padding padding)
{
    const auto k = kernel_size;
    const auto c_in = input.channels();
    if (k == 0 || out_channels == 0 || kernels.size() != k * k * c_in * out_channels)
        throw Error(ErrorCode::DimensionMismatch, "conv kernels must be K x K x C_in x C_out");
    const auto pad = pad_before(k, padding);
    const auto oh = out_extent(input.height(), k, padding);
    const auto ow = out_extent(input.width(), k, padding);
    Tensor out(oh, ow, out_channels);
    for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
            for (std::size_t ky = 0; ky < k; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(input.height()))
                    continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const auto ix = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(input.width()))
                        continue;
                    for (std::size_t ci = 0; ci < c_in; ++ci) {
                        const double v = input.at(iy, ix, ci);
                        const double* w = kernels.data() + ((ky * k + kx) * c_in + ci) * out_channels;
                        for (std::size_t co = 0; co < out_channels; ++co)
                            out.at(y, x, co) += v * w[co];
                    }
                }
            }
        }
    }
    return out;
}

std::size_t separable_param_count(std::size_t k, std::size_t c_in, std::size_t c_out)
{
    return k * k * c_in + c_in * c_out;
}

std::size_t full_conv_param_count(std::size_t k, std::size_t c_in, std::size_t c_out)
{
    return k * k * c_in * c_out;
}

Tensor residual_apply(const Tensor& x, const Transform& inner, const Transform& projection)
{
    const Tensor f = inner(x);
    const Tensor shortcut = projection ? projection(x) : x;
    if (!f.same_shape(shortcut))
        throw Error(ErrorCode::DimensionMismatch,
                    projection ? "projection output does not match the residual branch"
                               : "residual branch changes shape and no projection is configured");
    Tensor h(f.height(), f.width(), f.channels());
    auto a = f.values();
    auto b = shortcut.values();
    auto out = h.values();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a[i] + b[i];
    return h;
}

Tensor relu(const Tensor& x)
{
    Tensor y(x.height(), x.width(), x.channels());
    auto in = x.values();
    auto out = y.values();
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i] = in[i] > 0.0 ? in[i] : 0.0;
    return y;
}

Tensor max_pool(const Tensor& x, std::size_t window)
{
    if (window == 0 || x.height() < window || x.width() < window)
        throw Error(ErrorCode::DimensionMismatch, "pooling window larger than input");
    const auto oh = x.height() / window;
    const auto ow = x.width() / window;
    Tensor y(oh, ow, x.channels());
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
            for (std::size_t c = 0; c < x.channels(); ++c) {
                double m = x.at(oy * window, ox * window, c);
                for (std::size_t dy = 0; dy < window; ++dy)
                    for (std::size_t dx = 0; dx < window; ++dx)
                        m = std::max(m, x.at(oy * window + dy, ox * window + dx, c));
                y.at(oy, ox, c) = m;
            }
    return y;
}

std::vector<double> global_average_pool(const Tensor& x)
{
    const auto pixels = x.height() * x.width();
    if (pixels == 0)
        throw Error(ErrorCode::DimensionMismatch, "cannot pool an empty tensor");
    std::vector<double> out(x.channels(), 0.0);
    auto in = x.values();
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i % x.channels()] += in[i];
    for (auto& v : out)
        v /= static_cast<double>(pixels);
    return out;
}

std::vector<double> softmax(std::span<const double> logits)
{
    if (logits.empty())
        throw Error(ErrorCode::DimensionMismatch, "softmax of an empty vector");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (auto& v : out)
        v /= total;
    return out;
}

void WeightStore::put(std::string name, std::vector<std::size_t> shape, std::vector<double> values)
{
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
        throw Error(ErrorCode::InvalidParams, "blob names must be non-empty without whitespace");
    if (product(shape) != values.size())
        throw Error(ErrorCode::DimensionMismatch, "blob '" + name + "' has " + std::to_string(values.size()) +
                                                      " values for shape " + shape_string(shape));
    blobs_[std::move(name)] = Blob{std::move(shape), std::move(values)};
}

const WeightStore::Blob& WeightStore::get(const std::string& name) const
{
    auto it = blobs_.find(name);
    if (it == blobs_.end())
        throw Error(ErrorCode::InvalidParams, "missing weight blob '" + name + "'");
    return it->second;
}

void WeightStore::save(std::ostream& out) const
{
    out << "tomnet 1\n";
    for (const auto& [name, blob] : blobs_) {
        out << "blob " << name << ' ' << blob.shape.size();
        for (auto d : blob.shape)
            out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < blob.values.size(); ++i)
            out << detail::format_double(blob.values[i]) << ((i + 1) % 8 == 0 || i + 1 == blob.values.size() ? '\n' : ' ');
    }
}

WeightStore WeightStore::load(std::istream& in)
{
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "tomnet" || version != 1)
        throw Error(ErrorCode::Malformed, "weight file must start with 'tomnet 1'");
    WeightStore store;
    std::string word;
    while (in >> word) {
        if (word != "blob")
            throw Error(ErrorCode::Malformed, "expected 'blob', found '" + word + "'");
        std::string name;
        std::size_t rank = 0;
        if (!(in >> name >> rank) || rank == 0 || rank > 8)
            throw Error(ErrorCode::Malformed, "bad blob header");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape)
            if (!(in >> d))
                throw Error(ErrorCode::Malformed, "bad shape for blob '" + name + "'");
        std::vector<double> values(product(shape));
        for (auto& v : values) {
            std::string token;
            if (!(in >> token))
                throw Error(ErrorCode::Malformed, "blob '" + name + "' is truncated");
            v = detail::parse_double(token, name);
        }
        if (store.contains(name))
            throw Error(ErrorCode::Malformed, "duplicate blob '" + name + "'");
        store.put(std::move(name), std::move(shape), std::move(values));
    }
    return store;
}

WeightStore WeightStore::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open weight file '" + path + "'");
    return load(in);
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> NetworkSpec::manifest() const
{
    std::vector<std::pair<std::string, std::vector<std::size_t>>> m;
    auto bn = [&](const std::string& prefix, std::size_t c) {
        for (const char* p : {"gamma", "beta", "mean", "variance"})
            m.emplace_back(prefix + ".bn." + p, std::vector<std::size_t>{c});
    };
    m.emplace_back("entry.conv", std::vector<std::size_t>{kernel_size, kernel_size, 1, entry_channels});
    bn("entry", entry_channels);
    std::size_t c_in = entry_channels;
    for (std::size_t b = 0; b < block_channels.size(); ++b) {
        const auto prefix = "block" + std::to_string(b + 1);
        const auto c_out = block_channels[b];
        m.emplace_back(prefix + ".depthwise", std::vector<std::size_t>{kernel_size, kernel_size, c_in});
        m.emplace_back(prefix + ".pointwise", std::vector<std::size_t>{c_in, c_out});
        bn(prefix, c_out);
        if (c_in != c_out)
            m.emplace_back(prefix + ".projection", std::vector<std::size_t>{c_in, c_out});
        c_in = c_out;
    }
    m.emplace_back("classifier.weights", std::vector<std::size_t>{c_in, classes});
    m.emplace_back("classifier.bias", std::vector<std::size_t>{classes});
    return m;
}

void NetworkSpec::validate(const WeightStore& weights) const
{
    if (classes != kEmotionCount)
        throw Error(ErrorCode::InvalidParams, "the recognizer must output 7 classes");
    std::size_t side = input_size;
    for (std::size_t b = 0; b < block_channels.size(); ++b) {
        side /= 2;
        if (side == 0)
            throw Error(ErrorCode::InvalidParams, "input too small for the number of pooling stages");
    }
    for (const auto& [name, shape] : manifest()) {
        const auto& blob = weights.get(name);
        if (blob.shape != shape)
            throw Error(ErrorCode::DimensionMismatch,
                        "blob '" + name + "' has shape " + shape_string(blob.shape) + ", expected " + shape_string(shape));
        if (name.ends_with(".bn.variance"))
            for (double v : blob.values)
                if (!(v > 0.0))
                    throw Error(ErrorCode::InvalidParams, "blob '" + name + "' has a non-positive variance");
    }
}

WeightStore random_weights(const NetworkSpec& spec, Rng& rng)
{
    WeightStore w;
    for (const auto& [name, shape] : spec.manifest()) {
        std::vector<double> values(product(shape));
        const bool conv_like = shape.size() >= 2;
        const double fan_in = conv_like ? static_cast<double>(product(shape) / shape.back()) : 1.0;
        for (auto& v : values) {
            if (name.ends_with(".variance"))
                v = rng.uniform(0.5, 1.5);
            else if (name.ends_with(".gamma"))
                v = rng.uniform(0.8, 1.2);
            else if (name.ends_with(".beta") || name.ends_with(".mean") || name.ends_with(".bias"))
                v = rng.uniform(-0.1, 0.1);
            else
                v = rng.uniform(-1.0, 1.0) * std::sqrt(3.0 / fan_in);
        }
        w.put(name, shape, std::move(values));
    }
    return w;
}

namespace {

Tensor apply_bn(const Tensor& x, const WeightStore& w, const std::string& prefix)
{
    return batchnorm_infer(x, w.get(prefix + ".bn.mean").values, w.get(prefix + ".bn.variance").values,
                           w.get(prefix + ".bn.gamma").values, w.get(prefix + ".bn.beta").values);
}

} // namespace

std::vector<double> forward(const Tensor& image, const NetworkSpec& spec, const WeightStore& weights)
{
    spec.validate(weights);
    if (image.height() != spec.input_size || image.width() != spec.input_size || image.channels() != 1)
        throw Error(ErrorCode::DimensionMismatch, "recognizer expects a " + std::to_string(spec.input_size) + "x" +
                                                      std::to_string(spec.input_size) + " grayscale image");
    const auto k = spec.kernel_size;
    Tensor x = conv2d(image, weights.get("entry.conv").values, k, spec.entry_channels, Padding::Same);
    x = relu(apply_bn(x, weights, "entry"));

    std::size_t c_in = spec.entry_channels;
    for (std::size_t b = 0; b < spec.block_channels.size(); ++b) {
        const auto prefix = "block" + std::to_string(b + 1);
        const auto c_out = spec.block_channels[b];
        const auto& dw = weights.get(prefix + ".depthwise");
        const Tensor dw_kernels(k, k, c_in, dw.values);
        const auto& pw = weights.get(prefix + ".pointwise").values;
        Transform branch = [&](const Tensor& in) {
            return relu(apply_bn(depthwise_separable_conv(in, dw_kernels, pw, c_out, Padding::Same), weights, prefix));
        };
        Transform projection;
        if (c_in != c_out) {
            const auto& proj = weights.get(prefix + ".projection").values;
            projection = [&proj, c_out](const Tensor& in) { return pointwise_conv(in, proj, c_out); };
        }
        x = max_pool(residual_apply(x, branch, projection), 2);
        c_in = c_out;
    }

    Tensor logits_map = pointwise_conv(x, weights.get("classifier.weights").values, spec.classes);
    auto logits = global_average_pool(logits_map);
    const auto& bias = weights.get("classifier.bias").values;
    for (std::size_t i = 0; i < logits.size(); ++i)
        logits[i] += bias[i];
    return softmax(logits);
}

Classification classify(const Tensor& image, const NetworkSpec& spec, const WeightStore* weights)
{
    if (!weights)
        throw Error(ErrorCode::InvalidParams, "no recognizer weights loaded");
    const auto px = image.values();
    if (!std::all_of(px.begin(), px.end(), [](double v) { return v >= 0.0 && v <= 1.0; }))
        throw Error(ErrorCode::InvalidParams, "image values must lie in [0,1]");
    Classification c;
    c.scores = forward(image, spec, *weights);
    // max_element returns the first maximum, i.e. the fixed label order on ties
    const auto best = std::max_element(c.scores.begin(), c.scores.end());
    c.emotion = kAllEmotions[static_cast<std::size_t>(best - c.scores.begin())];
    c.intensity = *best;
    return c;
}

ConfusionMatrix ConfusionMatrix::identity()
{
    EmotionMatrix m{};
    for (auto e : kAllEmotions)
        m[index(e)][index(e)] = 1.0;
    return from_raw(m);
}

ConfusionMatrix ConfusionMatrix::from_raw(const EmotionMatrix& raw)
{
    ConfusionMatrix cm;
    cm.raw_ = raw;
    for (auto truth : kAllEmotions) {
        const auto t = index(truth);
        double sum = 0.0;
        for (auto pred : kAllEmotions) {
            const double v = raw[index(pred)][t];
            if (!(v >= 0.0) || !std::isfinite(v))
                throw Error(ErrorCode::NegativeEntry, "confusion matrix entries must be non-negative");
            sum += v;
        }
        if (!(sum > 0.0))
            throw Error(ErrorCode::ZeroRow, "confusion column '" + std::string(to_string(truth)) + "' is all zero");
        for (auto pred : kAllEmotions)
            cm.normalized_[index(pred)][t] = raw[index(pred)][t] / sum;
    }
    return cm;
}

ConfusionMatrix ConfusionMatrix::parse(std::istream& in)
{
    return from_raw(read_emotion_matrix(in, "confusion matrix"));
}

ConfusionMatrix ConfusionMatrix::load_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open confusion matrix '" + path + "'");
    return parse(in);
}

double ConfusionMatrix::raw_column_sum(Emotion truth) const
{
    double sum = 0.0;
    for (auto pred : kAllEmotions)
        sum += raw_[index(pred)][index(truth)];
    return sum;
}

Emotion noisy_recognize(Emotion truth, const ConfusionMatrix& matrix, Rng& rng)
{
    EmotionVector column{};
    for (auto pred : kAllEmotions)
        column[index(pred)] = matrix.probability(pred, truth);
    const auto i = rng.categorical(column);
    return kAllEmotions.at(std::min(i, kEmotionCount - 1));
}

} // namespace tomtalker::perception
