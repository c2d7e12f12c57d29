#pragma once

#include "tomtalker/emotion.hpp"
#include "tomtalker/random.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tomtalker::perception {

/// Dense height x width x channels array, row-major with channels innermost.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    Tensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return values_.size(); }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return values_[(y * width_ + x) * channels_ + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const
    {
        return values_[(y * width_ + x) * channels_ + c];
    }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool same_shape(const Tensor& other) const
    {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    bool all_finite() const;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

enum class Padding { Same, Valid };

inline constexpr double kBatchNormEpsilon = 1e-5;

/// y = gamma (x - mean) / sqrt(variance + eps) + beta, per channel.
Tensor batchnorm_infer(const Tensor& x, std::span<const double> mean, std::span<const double> variance,
                       std::span<const double> gamma, std::span<const double> beta,
                       double eps = kBatchNormEpsilon);

/// Per-channel spatial convolution. `kernels` is K x K x C (one K x K filter
/// per input channel), stride 1.
Tensor depthwise_conv(const Tensor& input, const Tensor& kernels, Padding padding);

/// 1x1 convolution with a C_in x C_out weight matrix, row-major.
Tensor pointwise_conv(const Tensor& input, std::span<const double> weights, std::size_t out_channels);

Tensor depthwise_separable_conv(const Tensor& input, const Tensor& depthwise_kernels,
                                std::span<const double> pointwise_weights, std::size_t out_channels,
                                Padding padding);

/// Full convolution. `kernels` holds K x K x C_in x C_out values laid out as
/// [ky][kx][cin][cout].
Tensor conv2d(const Tensor& input, std::span<const double> kernels, std::size_t kernel_size,
              std::size_t out_channels, Padding padding);

std::size_t separable_param_count(std::size_t k, std::size_t c_in, std::size_t c_out);
std::size_t full_conv_param_count(std::size_t k, std::size_t c_in, std::size_t c_out);

using Transform = std::function<Tensor(const Tensor&)>;

/// H(x) = F(x) + shortcut(x). Without a projection, F must preserve the shape.
Tensor residual_apply(const Tensor& x, const Transform& inner, const Transform& projection = {});

Tensor relu(const Tensor& x);

/// Non-overlapping max pooling; odd trailing rows/columns are dropped.
Tensor max_pool(const Tensor& x, std::size_t window);

std::vector<double> global_average_pool(const Tensor& x);

/// Numerically stable softmax (shifted by the max logit).
std::vector<double> softmax(std::span<const double> logits);

/// Named weight blobs with their shapes. Text container:
///
///     tomnet 1
///     blob <name> <rank> <dim>...
///     <values, whitespace separated>
///     ...
///
/// Values follow each header in row-major order.
class WeightStore {
public:
    struct Blob {
        std::vector<std::size_t> shape;
        std::vector<double> values;
    };

    void put(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
    const Blob& get(const std::string& name) const;
    bool contains(const std::string& name) const { return blobs_.count(name) != 0; }
    const std::map<std::string, Blob>& blobs() const { return blobs_; }

    void save(std::ostream& out) const;
    static WeightStore load(std::istream& in);
    static WeightStore load_file(const std::string& path);

private:
    std::map<std::string, Blob> blobs_;
};

/// Layer plan of the emotion recognizer: an entry 3x3 convolution with batch
/// norm and ReLU, four residual blocks (depthwise + pointwise + BN + ReLU
/// with a 1x1 projection shortcut when the width changes, then 2x2 max
/// pooling), a 1x1 classifier to seven channels, global average pooling and
/// softmax.
struct NetworkSpec {
    std::size_t input_size = 48;
    std::size_t entry_channels = 8;
    std::vector<std::size_t> block_channels{8, 16, 32, 64};
    std::size_t kernel_size = 3;
    std::size_t classes = kEmotionCount;

    /// Names and shapes of every blob the forward pass reads.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> manifest() const;

    /// Checks that `weights` holds every blob with the right shape and that
    /// all BN variances are positive.
    void validate(const WeightStore& weights) const;
};

/// Random weights matching `spec`, for tests and demos.
WeightStore random_weights(const NetworkSpec& spec, Rng& rng);

/// Forward pass to the softmax output (length `spec.classes`).
std::vector<double> forward(const Tensor& image, const NetworkSpec& spec, const WeightStore& weights);

struct Classification {
    Emotion emotion = Emotion::Neutral;
    double intensity = 0.0;  // winning softmax score
    std::vector<double> scores;
};

/// Runs the recognizer on a 48x48 grayscale image with values in [0,1].
Classification classify(const Tensor& image, const NetworkSpec& spec, const WeightStore* weights);

/// Column-stochastic recognition channel: entry [predicted][true].
class ConfusionMatrix {
public:
    static ConfusionMatrix identity();
    static ConfusionMatrix from_raw(const EmotionMatrix& raw);
    static ConfusionMatrix parse(std::istream& in);
    static ConfusionMatrix load_file(const std::string& path);

    double probability(Emotion predicted, Emotion truth) const
    {
        return normalized_[index(predicted)][index(truth)];
    }

    /// Column sum of `truth` as it appeared in the file.
    double raw_column_sum(Emotion truth) const;

    const EmotionMatrix& normalized() const { return normalized_; }
    const EmotionMatrix& raw() const { return raw_; }

private:
    EmotionMatrix raw_{};
    EmotionMatrix normalized_{};
};

/// Samples a predicted label from the column of `truth`.
Emotion noisy_recognize(Emotion truth, const ConfusionMatrix& matrix, Rng& rng);

} // namespace tomtalker::perception
