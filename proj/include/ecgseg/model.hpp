#pragma once

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ecgseg/ops.hpp"
#include "ecgseg/tensor.hpp"
#include "ecgseg/types.hpp"

namespace ecgseg::model {

using Real = float;
using RTensor = nn::Tensor<Real>;

struct ModelConfig {
  std::array<int, 5> widths{64, 128, 256, 512, 1024};
  int kernel = 9;
  int padding = 4;
  Real relu_slope = Real(0.01);
  int n_classes = 4;
  // full-scale skip aggregation
  int skip_width = 32;
  int decoder_width = 64;
  // classification branch
  bool with_classifier = false;
  int cls_filters = 512;
  int cls_kernel = 17;
  int cls_classes = 2;
  double dropout_p = 0.2;

  static ModelConfig paper_scale(bool with_classifier = false);
  static ModelConfig desk_scale(bool with_classifier = false);
};

// 2 x (conv k9 p4 -> batchnorm -> leaky relu)
struct Conv1dLayer {
  RTensor w, b;
  int padding = 0;

  void init(int c_out, int c_in, int kernel, int padding, std::mt19937_64& rng);
  RTensor forward(const RTensor& x) const { return nn::conv1d(x, w, b, padding); }
};

struct BatchNormLayer {
  RTensor gamma, beta;
  std::vector<Real> running_mean, running_var;

  void init(int channels);
  RTensor forward(const RTensor& x, bool training) {
    return nn::batchnorm1d(x, gamma, beta, running_mean, running_var, training);
  }
};

struct ForwardOutputs {
  RTensor mask_probs;  // [4, L_in], columns sum to 1
  RTensor cls_probs;   // [2, 1] when the classifier branch ran
};

// Encoder-decoder segmentation network over single-lead 500 Hz signals.
// Five encoder scales (maxpool /2 between them); the decoder aggregates
// all scales at every level (full-scale skips), and the head is a
// kernel-1 conv to 4 classes plus per-timestamp softmax. The classifier
// branch pools every encoder scale down to the deepest one and predicts
// AFIB/AFL vs other.
class SegModel {
 public:
  explicit SegModel(const ModelConfig& config, std::uint64_t seed = 0x1234abcdULL);

  // Inputs shorter than 16 samples raise InputTooShort. The signal is
  // edge-padded to a multiple of 16 internally and the output trimmed back.
  ForwardOutputs forward(const std::vector<Real>& signal, bool training,
                         std::mt19937_64* dropout_rng, bool want_mask, bool want_cls);

  SegmentationMask segment(const std::vector<Real>& signal);
  ClassifierOutput classify(const std::vector<Real>& signal);

  size_t param_count() const;
  std::vector<std::pair<std::string, RTensor>> named_params();
  std::vector<RTensor> params();
  std::vector<std::pair<std::string, std::vector<Real>*>> named_buffers();

  const ModelConfig& config() const { return config_; }

  void save(const std::string& path) const;
  static SegModel load(const std::string& path);

 private:
  struct ConvBlock {
    Conv1dLayer conv1, conv2;
    BatchNormLayer bn1, bn2;

    void init(int c_in, int c_out, int kernel, int padding, std::mt19937_64& rng);
    RTensor forward(const RTensor& x, bool training, Real slope);
  };
  struct SkipConv {
    Conv1dLayer conv;  // kernel 1
    BatchNormLayer bn;
  };
  struct DecoderLevel {
    std::vector<SkipConv> skips;  // one per source scale, shallow to deep
    ConvBlock fuse;
  };
  struct ClsBranch {
    Conv1dLayer conv1, conv2;  // cls_filters filters, cls_kernel wide
    BatchNormLayer bn1, bn2;
    Conv1dLayer fc;  // kernel-1 conv acting as the fully connected layer
  };

  void build(std::uint64_t seed);
  void visit_params(const std::function<void(const std::string&, const RTensor&)>& fn) const;

  ModelConfig config_;
  std::vector<ConvBlock> encoder_;       // 5 levels
  std::vector<DecoderLevel> decoder_;    // levels 4..1 (deep to shallow)
  Conv1dLayer head_;
  std::unique_ptr<ClsBranch> cls_;
};

}  // namespace ecgseg::model
