#include <Eigen/Core>
#include <cmath>

#include "nailguard/models.hpp"
#include "nailguard/random.hpp"

namespace nailguard {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

constexpr double kChannelMean[3] = {0.485, 0.456, 0.406};
// Caffe-style input: 0-255 pixel scale, ImageNet channel mean removed.
constexpr double kPixelScale = 255.0;

void reshape(Tensor3& t, int h, int w, int c) {
  t.height = h;
  t.width = w;
  t.channels = c;
  t.data.resize(static_cast<std::size_t>(h) * w * c);
}

// 3x3 "same" patches; row (y, x), column (ky, kx, c). Every element is
// written, padding included.
void im2col3x3(const Tensor3& in, RowMatrix& cols) {
  const int c = in.channels;
  cols.resize(static_cast<Eigen::Index>(in.height) * in.width, 9 * c);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double* row = cols.data() + (static_cast<std::size_t>(y) * in.width + x) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = y + ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = x + kx - 1;
          double* dst = row + (ky * 3 + kx) * c;
          if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) {
            std::fill_n(dst, c, 0.0);
          } else {
            std::copy_n(in.data.data() + in.index(iy, ix, 0), c, dst);
          }
        }
      }
    }
  }
}

void col2im3x3(const RowMatrix& cols, Tensor3& out) {
  const int c = out.channels;
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double* row = cols.data() + (static_cast<std::size_t>(y) * out.width + x) * 9 * c;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = y + ky - 1;
        if (iy < 0 || iy >= out.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = x + kx - 1;
          if (ix < 0 || ix >= out.width) continue;
          double* dst = out.data.data() + out.index(iy, ix, 0);
          const double* src = row + (ky * 3 + kx) * c;
          for (int ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

// 2x2 stride-2 max pool of relu(pre); argmax holds flat indices into pre.
// Ties resolve to the first position in row-major window order.
void relu_maxpool2(const Tensor3& pre, Tensor3& out, std::vector<std::uint32_t>& argmax) {
  reshape(out, pre.height / 2, pre.width / 2, pre.channels);
  argmax.resize(out.size());
  const int ch = pre.channels;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const std::size_t base = pre.index(2 * y, 2 * x, 0);
      const std::size_t taps[4] = {base, base + static_cast<std::size_t>(ch),
                                   base + static_cast<std::size_t>(pre.width) * ch,
                                   base + static_cast<std::size_t>(pre.width + 1) * ch};
      const std::size_t o = out.index(y, x, 0);
      for (int c = 0; c < ch; ++c) {
        std::size_t best_idx = taps[0] + static_cast<std::size_t>(c);
        double best = std::max(pre.data[best_idx], 0.0);
        for (int t = 1; t < 4; ++t) {
          const std::size_t idx = taps[t] + static_cast<std::size_t>(c);
          const double v = std::max(pre.data[idx], 0.0);
          if (v > best) {
            best = v;
            best_idx = idx;
          }
        }
        out.data[o + static_cast<std::size_t>(c)] = best;
        argmax[o + static_cast<std::size_t>(c)] = static_cast<std::uint32_t>(best_idx);
      }
    }
  }
}

// Routes pooled gradients to their argmax positions, gated by the ReLU.
void maxpool_relu_backward(const Tensor3& d_out, const Tensor3& pre, const std::vector<std::uint32_t>& argmax,
                           Tensor3& d_pre) {
  reshape(d_pre, pre.height, pre.width, pre.channels);
  std::fill(d_pre.data.begin(), d_pre.data.end(), 0.0);
  for (std::size_t o = 0; o < d_out.size(); ++o) {
    const std::size_t idx = argmax[o];
    if (pre.data[idx] > 0.0) d_pre.data[idx] += d_out.data[o];
  }
}

struct ConvLayer {
  Parameter weight;  // [3, 3, in, out]
  Parameter bias;    // [out]

  ConvLayer(const std::string& name, int in, int out, Rng& rng)
      : weight{name + ".weight", {3, 3, in, out}, std::vector<double>(static_cast<std::size_t>(9 * in * out))},
        bias{name + ".bias", {out}, std::vector<double>(static_cast<std::size_t>(out), 0.0)} {
    const double stddev = std::sqrt(2.0 / (9.0 * in));
    for (double& w : weight.value) w = rng.normal() * stddev;
  }

  int in() const { return weight.shape[2]; }
  int out() const { return weight.shape[3]; }
  ConstMap kernel() const { return ConstMap(weight.value.data(), 9 * in(), out()); }

  void forward(const RowMatrix& cols, int h, int w, Tensor3& pre) const {
    reshape(pre, h, w, out());
    MutMap out_map(pre.data.data(), static_cast<Eigen::Index>(h) * w, out());
    out_map.noalias() = cols * kernel();
    out_map.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value.data(), out());
  }
};

struct TinyTrace final : Backbone::Trace {
  int in_h = 0, in_w = 0;
  RowMatrix cols1, cols2, d_cols;
  Tensor3 centred, pre1, pool1, pre2, features;
  std::vector<std::uint32_t> arg1, arg2;
  Tensor3 d_pre2, d_pool1, d_pre1;
};

class TinyBackbone final : public Backbone {
 public:
  explicit TinyBackbone(std::uint64_t seed) : TinyBackbone(Rng(seed)) {}

  const BackboneSpec& spec() const override { return backbone_spec("tiny_test"); }
  std::unique_ptr<Backbone> clone() const override { return std::make_unique<TinyBackbone>(*this); }

  std::vector<Parameter*> parameters() override { return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias}; }
  std::vector<const Parameter*> parameters() const override {
    return {&conv1_.weight, &conv1_.bias, &conv2_.weight, &conv2_.bias};
  }

  std::unique_ptr<Trace> make_trace() const override { return std::make_unique<TinyTrace>(); }

  const Tensor3& forward(const Tensor3& input, Trace& trace) const override {
    auto& t = dynamic_cast<TinyTrace&>(trace);
    t.in_h = input.height;
    t.in_w = input.width;
    reshape(t.centred, input.height, input.width, input.channels);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const std::size_t c = i % kInputChannels;
      t.centred.data[i] = kPixelScale * (input.data[i] - kChannelMean[c]);
    }
    im2col3x3(t.centred, t.cols1);
    conv1_.forward(t.cols1, input.height, input.width, t.pre1);
    relu_maxpool2(t.pre1, t.pool1, t.arg1);
    im2col3x3(t.pool1, t.cols2);
    conv2_.forward(t.cols2, t.pool1.height, t.pool1.width, t.pre2);
    relu_maxpool2(t.pre2, t.features, t.arg2);
    return t.features;
  }

  void backward(Trace& trace, const Tensor3& d_features, std::span<std::vector<double>> grads,
                Tensor3* d_input) const override {
    auto& t = dynamic_cast<TinyTrace&>(trace);
    const bool want_params = grads.size() >= 4;

    maxpool_relu_backward(d_features, t.pre2, t.arg2, t.d_pre2);
    ConstMap dp2(t.d_pre2.data.data(), static_cast<Eigen::Index>(t.d_pre2.height) * t.d_pre2.width, conv2_.out());
    if (want_params) {
      MutMap(grads[2].data(), 9 * conv2_.in(), conv2_.out()).noalias() += t.cols2.transpose() * dp2;
      Eigen::Map<Eigen::RowVectorXd>(grads[3].data(), conv2_.out()) += dp2.colwise().sum();
    }
    if (!want_params && d_input == nullptr) return;

    t.d_cols.noalias() = dp2 * conv2_.kernel().transpose();
    reshape(t.d_pool1, t.pool1.height, t.pool1.width, conv1_.out());
    col2im3x3(t.d_cols, t.d_pool1);
    maxpool_relu_backward(t.d_pool1, t.pre1, t.arg1, t.d_pre1);
    ConstMap dp1(t.d_pre1.data.data(), static_cast<Eigen::Index>(t.d_pre1.height) * t.d_pre1.width, conv1_.out());
    if (want_params) {
      MutMap(grads[0].data(), 9 * conv1_.in(), conv1_.out()).noalias() += t.cols1.transpose() * dp1;
      Eigen::Map<Eigen::RowVectorXd>(grads[1].data(), conv1_.out()) += dp1.colwise().sum();
    }
    if (d_input) {
      t.d_cols.noalias() = dp1 * conv1_.kernel().transpose();
      reshape(*d_input, t.in_h, t.in_w, conv1_.in());
      col2im3x3(t.d_cols, *d_input);
      for (std::size_t i = 0; i < d_input->size(); ++i) d_input->data[i] *= kPixelScale;
    }
  }

 private:
  explicit TinyBackbone(Rng rng) : conv1_("conv1", 3, 8, rng), conv2_("conv2", 8, 16, rng) {}

  ConvLayer conv1_;
  ConvLayer conv2_;
};

}  // namespace

std::unique_ptr<Backbone> make_tiny_backbone(std::uint64_t init_seed) {
  return std::make_unique<TinyBackbone>(init_seed);
}

}  // namespace nailguard
