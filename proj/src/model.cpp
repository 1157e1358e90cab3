#include "ecgseg/model.hpp"

#include <functional>
#include <sstream>

#include "ecgseg/checkpoint.hpp"
#include "ecgseg/errors.hpp"
#include "ecgseg/optim.hpp"

namespace ecgseg::model {

ModelConfig ModelConfig::paper_scale(bool with_classifier) {
  ModelConfig c;
  c.widths = {64, 128, 256, 512, 1024};
  c.with_classifier = with_classifier;
  return c;
}

ModelConfig ModelConfig::desk_scale(bool with_classifier) {
  ModelConfig c;
  c.widths = {16, 32, 64, 128, 256};
  c.with_classifier = with_classifier;
  return c;
}

void Conv1dLayer::init(int c_out, int c_in, int kernel, int pad, std::mt19937_64& rng) {
  w = nn::he_init<Real>({c_out, c_in, kernel}, c_in * kernel, rng);
  b = RTensor::zeros({c_out}, true);
  padding = pad;
}

void BatchNormLayer::init(int channels) {
  gamma = RTensor::zeros({channels}, true);
  std::fill(gamma.value().begin(), gamma.value().end(), Real(1));
  beta = RTensor::zeros({channels}, true);
  running_mean.assign(channels, Real(0));
  running_var.assign(channels, Real(1));
}

void SegModel::ConvBlock::init(int c_in, int c_out, int kernel, int padding, std::mt19937_64& rng) {
  conv1.init(c_out, c_in, kernel, padding, rng);
  bn1.init(c_out);
  conv2.init(c_out, c_out, kernel, padding, rng);
  bn2.init(c_out);
}

RTensor SegModel::ConvBlock::forward(const RTensor& x, bool training, Real slope) {
  auto h = nn::leaky_relu(bn1.forward(conv1.forward(x), training), slope);
  return nn::leaky_relu(bn2.forward(conv2.forward(h), training), slope);
}

SegModel::SegModel(const ModelConfig& config, std::uint64_t seed) : config_(config) { build(seed); }

void SegModel::build(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& w = config_.widths;

  encoder_.resize(5);
  encoder_[0].init(1, w[0], config_.kernel, config_.padding, rng);
  for (int i = 1; i < 5; ++i) encoder_[i].init(w[i - 1], w[i], config_.kernel, config_.padding, rng);

  // Decoder levels 4 down to 1. Level d sees encoder scales 1..d and the
  // deeper decoder outputs d+1..5 (level 5 is the deepest encoder map).
  decoder_.resize(4);
  for (int d = 4; d >= 1; --d) {
    DecoderLevel& lvl = decoder_[4 - d];
    lvl.skips.resize(5);
    for (int k = 1; k <= 5; ++k) {
      int src_w;
      if (k <= d)
        src_w = w[k - 1];
      else if (k == 5)
        src_w = w[4];
      else
        src_w = config_.decoder_width;
      lvl.skips[k - 1].conv.init(config_.skip_width, src_w, 1, 0, rng);
      lvl.skips[k - 1].bn.init(config_.skip_width);
    }
    lvl.fuse.init(5 * config_.skip_width, config_.decoder_width, config_.kernel, config_.padding, rng);
  }

  head_.init(config_.n_classes, config_.decoder_width, 1, 0, rng);

  if (config_.with_classifier) {
    cls_ = std::make_unique<ClsBranch>();
    int agg = 0;
    for (int i = 0; i < 5; ++i) agg += w[i];
    const int pad = (config_.cls_kernel - 1) / 2;
    cls_->conv1.init(config_.cls_filters, agg, config_.cls_kernel, pad, rng);
    cls_->bn1.init(config_.cls_filters);
    cls_->conv2.init(config_.cls_filters, config_.cls_filters, config_.cls_kernel, pad, rng);
    cls_->bn2.init(config_.cls_filters);
    cls_->fc.init(config_.cls_classes, config_.cls_filters, 1, 0, rng);
  }
}

ForwardOutputs SegModel::forward(const std::vector<Real>& signal, bool training,
                                 std::mt19937_64* dropout_rng, bool want_mask, bool want_cls) {
  const long n = static_cast<long>(signal.size());
  if (n < 16) throw InputTooShort("input of " + std::to_string(n) + " samples; need at least 16");
  if (want_cls && !cls_) throw ShapeError("model has no classifier branch");

  const int pad = static_cast<int>((16 - n % 16) % 16);
  auto x = RTensor::from({1, static_cast<int>(n)}, std::vector<Real>(signal.begin(), signal.end()));
  if (pad > 0) x = nn::pad_right_edge(x, pad);

  std::vector<RTensor> enc(5);
  enc[0] = encoder_[0].forward(x, training, config_.relu_slope);
  for (int i = 1; i < 5; ++i)
    enc[i] = encoder_[i].forward(nn::maxpool1d(enc[i - 1]), training, config_.relu_slope);

  ForwardOutputs out;

  if (want_mask) {
    std::vector<RTensor> dec(6);  // 1..5, dec[5] = enc[4]
    dec[5] = enc[4];
    for (int d = 4; d >= 1; --d) {
      DecoderLevel& lvl = decoder_[4 - d];
      std::vector<RTensor> fused;
      fused.reserve(5);
      for (int k = 1; k <= 5; ++k) {
        RTensor src;
        if (k <= d) {
          src = enc[k - 1];
          for (int p = 0; p < d - k; ++p) src = nn::maxpool1d(src);
        } else {
          src = dec[k];
          for (int p = 0; p < k - d; ++p) src = nn::upsample_linear2(src);
        }
        auto& sk = lvl.skips[k - 1];
        fused.push_back(
            nn::leaky_relu(sk.bn.forward(sk.conv.forward(src), training), config_.relu_slope));
      }
      dec[d] = lvl.fuse.forward(nn::concat_channels(fused), training, config_.relu_slope);
    }

    auto logits = head_.forward(dec[1]);
    auto probs = nn::softmax_channels(logits);
    out.mask_probs = pad > 0 ? nn::crop_cols(probs, 0, static_cast<int>(n)) : probs;
  }

  if (want_cls) {
    const int deep_len = enc[4].dim(1);
    std::vector<RTensor> agg;
    agg.reserve(5);
    for (int i = 0; i < 4; ++i) agg.push_back(nn::avgpool1d(enc[i], deep_len));
    agg.push_back(enc[4]);
    auto h = nn::concat_channels(agg);
    h = nn::leaky_relu(cls_->bn1.forward(cls_->conv1.forward(h), training), config_.relu_slope);
    h = nn::dropout(h, config_.dropout_p, dropout_rng, training);
    h = nn::leaky_relu(cls_->bn2.forward(cls_->conv2.forward(h), training), config_.relu_slope);
    h = nn::dropout(h, config_.dropout_p, dropout_rng, training);
    h = nn::avgpool1d(h, 1);
    out.cls_probs = nn::softmax_channels(cls_->fc.forward(h));
  }
  return out;
}

SegmentationMask SegModel::segment(const std::vector<Real>& signal) {
  nn::NoGradGuard ng;
  auto out = forward(signal, /*training=*/false, nullptr, /*want_mask=*/true, /*want_cls=*/false);
  SegmentationMask mask;
  mask.length = out.mask_probs.dim(1);
  mask.probs = out.mask_probs.value();
  return mask;
}

ClassifierOutput SegModel::classify(const std::vector<Real>& signal) {
  nn::NoGradGuard ng;
  auto out = forward(signal, /*training=*/false, nullptr, /*want_mask=*/false, /*want_cls=*/true);
  ClassifierOutput c;
  c.p_afib_afl = out.cls_probs.value()[0];
  c.p_other = out.cls_probs.value()[1];
  return c;
}

void SegModel::visit_params(const std::function<void(const std::string&, const RTensor&)>& fn) const {
  auto block = [&](const std::string& prefix, const ConvBlock& cb) {
    fn(prefix + ".conv1.w", cb.conv1.w);
    fn(prefix + ".conv1.b", cb.conv1.b);
    fn(prefix + ".bn1.gamma", cb.bn1.gamma);
    fn(prefix + ".bn1.beta", cb.bn1.beta);
    fn(prefix + ".conv2.w", cb.conv2.w);
    fn(prefix + ".conv2.b", cb.conv2.b);
    fn(prefix + ".bn2.gamma", cb.bn2.gamma);
    fn(prefix + ".bn2.beta", cb.bn2.beta);
  };
  for (int i = 0; i < 5; ++i) block("enc" + std::to_string(i + 1), encoder_[i]);
  for (int d = 4; d >= 1; --d) {
    const auto& lvl = decoder_[4 - d];
    const std::string p = "dec" + std::to_string(d);
    for (int k = 1; k <= 5; ++k) {
      const auto& sk = lvl.skips[k - 1];
      const std::string sp = p + ".skip" + std::to_string(k);
      fn(sp + ".conv.w", sk.conv.w);
      fn(sp + ".conv.b", sk.conv.b);
      fn(sp + ".bn.gamma", sk.bn.gamma);
      fn(sp + ".bn.beta", sk.bn.beta);
    }
    block(p + ".fuse", lvl.fuse);
  }
  fn("head.w", head_.w);
  fn("head.b", head_.b);
  if (cls_) {
    fn("cls.conv1.w", cls_->conv1.w);
    fn("cls.conv1.b", cls_->conv1.b);
    fn("cls.bn1.gamma", cls_->bn1.gamma);
    fn("cls.bn1.beta", cls_->bn1.beta);
    fn("cls.conv2.w", cls_->conv2.w);
    fn("cls.conv2.b", cls_->conv2.b);
    fn("cls.bn2.gamma", cls_->bn2.gamma);
    fn("cls.bn2.beta", cls_->bn2.beta);
    fn("cls.fc.w", cls_->fc.w);
    fn("cls.fc.b", cls_->fc.b);
  }
}

size_t SegModel::param_count() const {
  size_t n = 0;
  visit_params([&](const std::string&, const RTensor& t) { n += t.size(); });
  return n;
}

std::vector<std::pair<std::string, RTensor>> SegModel::named_params() {
  std::vector<std::pair<std::string, RTensor>> out;
  visit_params([&](const std::string& name, const RTensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<RTensor> SegModel::params() {
  std::vector<RTensor> out;
  visit_params([&](const std::string&, const RTensor& t) { out.push_back(t); });
  return out;
}

std::vector<std::pair<std::string, std::vector<Real>*>> SegModel::named_buffers() {
  std::vector<std::pair<std::string, std::vector<Real>*>> out;
  auto bn = [&](const std::string& prefix, BatchNormLayer& layer) {
    out.emplace_back(prefix + ".running_mean", &layer.running_mean);
    out.emplace_back(prefix + ".running_var", &layer.running_var);
  };
  auto block = [&](const std::string& prefix, ConvBlock& cb) {
    bn(prefix + ".bn1", cb.bn1);
    bn(prefix + ".bn2", cb.bn2);
  };
  for (int i = 0; i < 5; ++i) block("enc" + std::to_string(i + 1), encoder_[i]);
  for (int d = 4; d >= 1; --d) {
    auto& lvl = decoder_[4 - d];
    const std::string p = "dec" + std::to_string(d);
    for (int k = 1; k <= 5; ++k) bn(p + ".skip" + std::to_string(k) + ".bn", lvl.skips[k - 1].bn);
    block(p + ".fuse", lvl.fuse);
  }
  if (cls_) {
    bn("cls.bn1", cls_->bn1);
    bn("cls.bn2", cls_->bn2);
  }
  return out;
}

void SegModel::save(const std::string& path) const {
  ckpt::Checkpoint c;
  std::ostringstream widths;
  for (int i = 0; i < 5; ++i) widths << (i ? "," : "") << config_.widths[i];
  c.config["widths"] = widths.str();
  c.config["kernel"] = std::to_string(config_.kernel);
  c.config["padding"] = std::to_string(config_.padding);
  c.config["relu_slope"] = std::to_string(config_.relu_slope);
  c.config["n_classes"] = std::to_string(config_.n_classes);
  c.config["skip_width"] = std::to_string(config_.skip_width);
  c.config["decoder_width"] = std::to_string(config_.decoder_width);
  c.config["with_classifier"] = config_.with_classifier ? "1" : "0";
  c.config["cls_filters"] = std::to_string(config_.cls_filters);
  c.config["cls_kernel"] = std::to_string(config_.cls_kernel);
  c.config["cls_classes"] = std::to_string(config_.cls_classes);
  c.config["dropout_p"] = std::to_string(config_.dropout_p);

  visit_params([&](const std::string& name, const RTensor& t) {
    c.add(name, t.shape(), t.value());
  });
  auto* self = const_cast<SegModel*>(this);
  for (auto& [name, buf] : self->named_buffers())
    c.add(name, {static_cast<int>(buf->size())}, *buf);
  ckpt::save(path, c);
}

SegModel SegModel::load(const std::string& path) {
  auto c = ckpt::load(path);
  ModelConfig cfg;
  auto get = [&](const std::string& key) -> std::string {
    auto it = c.config.find(key);
    if (it == c.config.end()) throw CheckpointError("checkpoint missing config key '" + key + "'");
    return it->second;
  };
  {
    std::istringstream is(get("widths"));
    std::string tok;
    for (int i = 0; i < 5; ++i) {
      if (!std::getline(is, tok, ',')) throw CheckpointError("bad widths in checkpoint");
      cfg.widths[i] = std::stoi(tok);
    }
  }
  cfg.kernel = std::stoi(get("kernel"));
  cfg.padding = std::stoi(get("padding"));
  cfg.relu_slope = std::stof(get("relu_slope"));
  cfg.n_classes = std::stoi(get("n_classes"));
  cfg.skip_width = std::stoi(get("skip_width"));
  cfg.decoder_width = std::stoi(get("decoder_width"));
  cfg.with_classifier = get("with_classifier") == "1";
  cfg.cls_filters = std::stoi(get("cls_filters"));
  cfg.cls_kernel = std::stoi(get("cls_kernel"));
  cfg.cls_classes = std::stoi(get("cls_classes"));
  cfg.dropout_p = std::stod(get("dropout_p"));

  SegModel m(cfg);
  for (auto& [name, t] : m.named_params()) {
    const auto* e = c.find(name);
    if (!e) throw CheckpointError("checkpoint missing tensor '" + name + "'");
    if (e->data.size() != t.size())
      throw CheckpointError("checkpoint tensor '" + name + "' has wrong size");
    std::copy(e->data.begin(), e->data.end(), t.value().begin());
  }
  for (auto& [name, buf] : m.named_buffers()) {
    const auto* e = c.find(name);
    if (!e) throw CheckpointError("checkpoint missing buffer '" + name + "'");
    if (e->data.size() != buf->size())
      throw CheckpointError("checkpoint buffer '" + name + "' has wrong size");
    std::copy(e->data.begin(), e->data.end(), buf->begin());
  }
  return m;
}

}  // namespace ecgseg::model
