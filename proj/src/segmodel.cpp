#include "emadapt/segmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "emadapt/error.hpp"
#include "emadapt/io.hpp"
#include "emadapt/rng.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::MatrixXd;

void ModelConfig::validate() const {
  if (depth < 1) throw Error(ErrorCode::kInvalidConfig, "model depth must be >= 1");
  if (base_channels < 1) throw Error(ErrorCode::kInvalidConfig, "base_channels must be >= 1");
  if (num_classes < 2) throw Error(ErrorCode::kInvalidConfig, "num_classes must be >= 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "dropout_rate must lie in [0, 1)");
  }
  if (input_size < 1 || input_size % size_multiple() != 0) {
    throw Error(ErrorCode::kShapeError, "input_size " + std::to_string(input_size) +
                                            " is not divisible by 2^depth = " +
                                            std::to_string(size_multiple()));
  }
}

ModelParams::ModelParams(ModelConfig config, std::vector<ParamTensor> tensors)
    : config_(config), tensors_(std::move(tensors)) {}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

std::string ModelParams::hash() const {
  std::vector<std::uint8_t> bytes;
  auto append = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  };
  for (const auto& t : tensors_) {
    append(t.name.data(), t.name.size());
    const std::uint64_t shape[2] = {static_cast<std::uint64_t>(t.value.rows()),
                                    static_cast<std::uint64_t>(t.value.cols())};
    append(shape, sizeof(shape));
    append(t.value.data(), static_cast<std::size_t>(t.value.size()) * sizeof(double));
  }
  return sha1_hex(bytes);
}

void ModelParams::reset_optimizer() {
  m_.clear();
  v_.clear();
  adam_steps_ = 0;
}

namespace {

struct ConvIdx {
  std::size_t w = 0;
  std::size_t b = 0;
};

struct BlockIdx {
  ConvIdx c1;
  ConvIdx c2;
};

// Tensor positions; creation order in init_model must match.
struct Layout {
  std::vector<BlockIdx> enc;
  BlockIdx mid;
  std::vector<ConvIdx> up;    // indexed by level
  std::vector<BlockIdx> dec;  // indexed by level
  ConvIdx out;
};

struct TensorSpec {
  std::string name;
  int rows;
  int cols;
  int fan_in;  // 0 for biases
};

std::vector<TensorSpec> tensor_specs(const ModelConfig& cfg, Layout* layout) {
  std::vector<TensorSpec> specs;
  auto add_conv = [&](const std::string& name, int cin, int cout, int taps) {
    ConvIdx idx{specs.size(), specs.size() + 1};
    specs.push_back({name + ".w", taps == 4 ? 4 * cout : cout, taps == 4 ? cin : taps * cin,
                     taps == 4 ? cin : taps * cin});
    specs.push_back({name + ".b", cout, 1, 0});
    return idx;
  };
  Layout l;
  int cin = 1;
  for (int level = 0; level < cfg.depth; ++level) {
    const int c = cfg.channels_at(level);
    const std::string p = "enc" + std::to_string(level);
    BlockIdx b;
    b.c1 = add_conv(p + ".conv1", cin, c, 9);
    b.c2 = add_conv(p + ".conv2", c, c, 9);
    l.enc.push_back(b);
    cin = c;
  }
  const int cb = cfg.bottleneck_channels();
  l.mid.c1 = add_conv("mid.conv1", cin, cb, 9);
  l.mid.c2 = add_conv("mid.conv2", cb, cb, 9);
  l.up.resize(cfg.depth);
  l.dec.resize(cfg.depth);
  for (int level = cfg.depth - 1; level >= 0; --level) {
    const int c = cfg.channels_at(level);
    const std::string p = "dec" + std::to_string(level);
    l.up[level] = add_conv(p + ".up", cfg.channels_at(level + 1), c, 4);
    l.dec[level].c1 = add_conv(p + ".conv1", 2 * c, c, 9);
    l.dec[level].c2 = add_conv(p + ".conv2", c, c, 9);
  }
  l.out = add_conv("out", cfg.base_channels, cfg.num_classes, 1);
  if (layout) *layout = std::move(l);
  return specs;
}

Layout layout_for(const ModelConfig& cfg) {
  Layout l;
  tensor_specs(cfg, &l);
  return l;
}

// Activation: channels x (h*w), pixel-major columns.
struct Act {
  MatrixXd x;
  int h = 0;
  int w = 0;
};

void im2col3x3(const Act& in, MatrixXd& col) {
  const Eigen::Index c = in.x.rows();
  const int h = in.h;
  const int w = in.w;
  col.resize(9 * c, static_cast<Eigen::Index>(h) * w);
  const double* src = in.x.data();
  double* dst = col.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* out = dst + (static_cast<Eigen::Index>(y) * w + x) * 9 * c;
      for (int k = 0; k < 9; ++k, out += c) {
        const int yy = y + k / 3 - 1;
        const int xx = x + k % 3 - 1;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
          std::fill(out, out + c, 0.0);
        } else {
          std::copy_n(src + (static_cast<Eigen::Index>(yy) * w + xx) * c, c, out);
        }
      }
    }
  }
}

void col2im3x3(const MatrixXd& col, int h, int w, MatrixXd& din) {
  const Eigen::Index c = col.rows() / 9;
  din.setZero(c, static_cast<Eigen::Index>(h) * w);
  const double* src = col.data();
  double* dst = din.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* in = src + (static_cast<Eigen::Index>(y) * w + x) * 9 * c;
      for (int k = 0; k < 9; ++k, in += c) {
        const int yy = y + k / 3 - 1;
        const int xx = x + k % 3 - 1;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        double* out = dst + (static_cast<Eigen::Index>(yy) * w + xx) * c;
        for (Eigen::Index i = 0; i < c; ++i) out[i] += in[i];
      }
    }
  }
}

struct ConvRecord {
  Act input;
  MatrixXd output;  // post-ReLU
};

struct BlockRecord {
  ConvRecord c1;
  ConvRecord c2;
  MatrixXd drop_mask;  // empty when dropout is off
};

struct Cache {
  std::vector<BlockRecord> enc;
  std::vector<std::vector<Eigen::Index>> pool_argmax;
  std::vector<std::pair<int, int>> pool_in_shape;
  BlockRecord mid;
  std::vector<Act> up_in;
  std::vector<BlockRecord> dec;
  Act penult;
  MatrixXd probs;
};

class Network {
 public:
  Network(const ModelParams& params, SeededRng* dropout)
      : params_(params),
        cfg_(params.config()),
        layout_(layout_for(params.config())),
        dropout_(cfg_.dropout_rate > 0.0 ? dropout : nullptr) {}

  const Layout& layout() const { return layout_; }

  const MatrixXd& t(std::size_t i) const { return params_.tensors()[i].value; }

  Act conv_relu(const Act& in, ConvIdx idx, ConvRecord* rec) const {
    MatrixXd col;
    im2col3x3(in, col);
    Act out;
    out.h = in.h;
    out.w = in.w;
    out.x.noalias() = t(idx.w) * col;
    out.x.colwise() += t(idx.b).col(0);
    out.x = out.x.cwiseMax(0.0);
    if (rec) {
      rec->input = in;
      rec->output = out.x;
    }
    return out;
  }

  void apply_dropout(Act& a, MatrixXd* mask_out) const {
    if (!dropout_) return;
    const double keep_scale = 1.0 / (1.0 - cfg_.dropout_rate);
    MatrixXd mask(a.x.rows(), a.x.cols());
    double* m = mask.data();
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      m[i] = dropout_->bernoulli(cfg_.dropout_rate) ? 0.0 : keep_scale;
    }
    a.x = a.x.cwiseProduct(mask);
    if (mask_out) *mask_out = std::move(mask);
  }

  // Two conv+ReLU layers then dropout. `pre_dropout` receives the block output
  // before dropout is applied.
  Act block(const Act& in, const BlockIdx& idx, BlockRecord* rec, MatrixXd* pre_dropout) const {
    Act a = conv_relu(in, idx.c1, rec ? &rec->c1 : nullptr);
    Act b = conv_relu(a, idx.c2, rec ? &rec->c2 : nullptr);
    if (pre_dropout) *pre_dropout = b.x;
    apply_dropout(b, rec ? &rec->drop_mask : nullptr);
    return b;
  }

  static Act maxpool(const Act& in, std::vector<Eigen::Index>* argmax) {
    Act out;
    out.h = in.h / 2;
    out.w = in.w / 2;
    const Eigen::Index c = in.x.rows();
    out.x.resize(c, static_cast<Eigen::Index>(out.h) * out.w);
    if (argmax) argmax->assign(static_cast<std::size_t>(out.x.size()), 0);
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const int q = y * out.w + x;
        const int base = (2 * y) * in.w + 2 * x;
        const int cand[4] = {base, base + 1, base + in.w, base + in.w + 1};
        for (Eigen::Index ch = 0; ch < c; ++ch) {
          int best = cand[0];
          double bv = in.x(ch, cand[0]);
          for (int k = 1; k < 4; ++k) {
            if (in.x(ch, cand[k]) > bv) {
              bv = in.x(ch, cand[k]);
              best = cand[k];
            }
          }
          out.x(ch, q) = bv;
          if (argmax) (*argmax)[static_cast<std::size_t>(q * c + ch)] = best;
        }
      }
    }
    return out;
  }

  Act upconv(const Act& in, ConvIdx idx) const {
    const MatrixXd& w = t(idx.w);
    const Eigen::Index cout = w.rows() / 4;
    MatrixXd tmp;
    tmp.noalias() = w * in.x;
    Act out;
    out.h = in.h * 2;
    out.w = in.w * 2;
    out.x.resize(cout, static_cast<Eigen::Index>(out.h) * out.w);
    for (int y = 0; y < in.h; ++y) {
      for (int x = 0; x < in.w; ++x) {
        const int p = y * in.w + x;
        for (int k = 0; k < 4; ++k) {
          const int q = (2 * y + k / 2) * out.w + 2 * x + k % 2;
          out.x.col(q) = tmp.block(k * cout, p, cout, 1) + t(idx.b).col(0);
        }
      }
    }
    return out;
  }

  struct Result {
    MatrixXd probs;   // classes x pixels
    Act penult;       // last decoder activation
    MatrixXd bottleneck;
  };

  Result forward(const Act& input, Cache* cache) const {
    const int depth = cfg_.depth;
    if (cache) {
      cache->enc.resize(depth);
      cache->pool_argmax.resize(depth);
      cache->pool_in_shape.resize(depth);
      cache->up_in.resize(depth);
      cache->dec.resize(depth);
    }
    std::vector<Act> skips(depth);
    Act x = input;
    for (int level = 0; level < depth; ++level) {
      Act b = block(x, layout_.enc[level], cache ? &cache->enc[level] : nullptr, nullptr);
      if (cache) cache->pool_in_shape[level] = {b.h, b.w};
      x = maxpool(b, cache ? &cache->pool_argmax[level] : nullptr);
      skips[level] = std::move(b);
    }
    Result r;
    x = block(x, layout_.mid, cache ? &cache->mid : nullptr, &r.bottleneck);
    for (int level = depth - 1; level >= 0; --level) {
      if (cache) cache->up_in[level] = x;
      Act u = upconv(x, layout_.up[level]);
      Act cat;
      cat.h = u.h;
      cat.w = u.w;
      cat.x.resize(u.x.rows() + skips[level].x.rows(), u.x.cols());
      cat.x.topRows(u.x.rows()) = u.x;
      cat.x.bottomRows(skips[level].x.rows()) = skips[level].x;
      x = block(cat, layout_.dec[level], cache ? &cache->dec[level] : nullptr, nullptr);
    }
    MatrixXd logits;
    logits.noalias() = t(layout_.out.w) * x.x;
    logits.colwise() += t(layout_.out.b).col(0);
    r.probs.resize(logits.rows(), logits.cols());
    for (Eigen::Index p = 0; p < logits.cols(); ++p) {
      const double mx = logits.col(p).maxCoeff();
      double sum = 0.0;
      for (Eigen::Index c = 0; c < logits.rows(); ++c) {
        const double e = std::exp(logits(c, p) - mx);
        r.probs(c, p) = e;
        sum += e;
      }
      r.probs.col(p) /= sum;
    }
    r.penult = std::move(x);
    if (cache) {
      cache->penult = r.penult;
      cache->probs = r.probs;
    }
    return r;
  }

  // Accumulates into grads; dx enters as gradient w.r.t. the block output
  // after dropout and leaves as gradient w.r.t. the block input.
  void block_backward(const BlockIdx& idx, const BlockRecord& rec, MatrixXd dx,
                      std::vector<MatrixXd>& grads, MatrixXd* din) const {
    if (rec.drop_mask.size() > 0) dx = dx.cwiseProduct(rec.drop_mask);
    MatrixXd mid;
    conv_backward(idx.c2, rec.c2, std::move(dx), grads, &mid);
    conv_backward(idx.c1, rec.c1, std::move(mid), grads, din);
  }

  void conv_backward(ConvIdx idx, const ConvRecord& rec, MatrixXd dout,
                     std::vector<MatrixXd>& grads, MatrixXd* din) const {
    dout = (rec.output.array() > 0.0).select(dout, 0.0);
    MatrixXd col;
    im2col3x3(rec.input, col);
    grads[idx.w].noalias() += dout * col.transpose();
    grads[idx.b].col(0) += dout.rowwise().sum();
    if (din) {
      MatrixXd dcol;
      dcol.noalias() = t(idx.w).transpose() * dout;
      col2im3x3(dcol, rec.input.h, rec.input.w, *din);
    }
  }

  // dlogits: classes x pixels.
  void backward(const Cache& cache, const MatrixXd& dlogits, std::vector<MatrixXd>& grads) const {
    const int depth = cfg_.depth;
    grads[layout_.out.w].noalias() += dlogits * cache.penult.x.transpose();
    grads[layout_.out.b].col(0) += dlogits.rowwise().sum();
    MatrixXd dx;
    dx.noalias() = t(layout_.out.w).transpose() * dlogits;

    std::vector<MatrixXd> dskip(depth);
    for (int level = 0; level < depth; ++level) {
      MatrixXd dcat;
      block_backward(layout_.dec[level], cache.dec[level], std::move(dx), grads, &dcat);
      const Eigen::Index cu = t(layout_.up[level].w).rows() / 4;
      dskip[level] = dcat.bottomRows(dcat.rows() - cu);
      const MatrixXd du = dcat.topRows(cu);
      // upconv backward
      const Act& in = cache.up_in[level];
      const int ow = in.w * 2;
      MatrixXd dtmp(4 * cu, du.cols() / 4);
      for (int y = 0; y < in.h; ++y) {
        for (int x = 0; x < in.w; ++x) {
          const int p = y * in.w + x;
          for (int k = 0; k < 4; ++k) {
            const int q = (2 * y + k / 2) * ow + 2 * x + k % 2;
            dtmp.block(k * cu, p, cu, 1) = du.col(q);
          }
        }
      }
      grads[layout_.up[level].w].noalias() += dtmp * in.x.transpose();
      grads[layout_.up[level].b].col(0) += du.rowwise().sum();
      dx.noalias() = t(layout_.up[level].w).transpose() * dtmp;
    }

    MatrixXd dmid_in;
    block_backward(layout_.mid, cache.mid, std::move(dx), grads, &dmid_in);
    dx = std::move(dmid_in);

    for (int level = depth - 1; level >= 0; --level) {
      const auto [h, w] = cache.pool_in_shape[level];
      MatrixXd dblock = dskip[level];
      const auto& argmax = cache.pool_argmax[level];
      const Eigen::Index c = dx.rows();
      for (Eigen::Index q = 0; q < dx.cols(); ++q) {
        for (Eigen::Index ch = 0; ch < c; ++ch) {
          dblock(ch, argmax[static_cast<std::size_t>(q * c + ch)]) += dx(ch, q);
        }
      }
      (void)h;
      (void)w;
      MatrixXd din;
      block_backward(layout_.enc[level], cache.enc[level], std::move(dblock), grads,
                     level > 0 ? &din : nullptr);
      dx = std::move(din);
    }
  }

 private:
  const ModelParams& params_;
  ModelConfig cfg_;
  Layout layout_;
  SeededRng* dropout_;
};

void check_image_shape(const ModelConfig& cfg, int width, int height) {
  const int m = cfg.size_multiple();
  if (width % m != 0 || height % m != 0) {
    throw Error(ErrorCode::kShapeError, "image " + std::to_string(width) + "x" +
                                            std::to_string(height) +
                                            " is not divisible by 2^depth = " + std::to_string(m));
  }
}

double normalize_pixel(std::uint8_t v) { return (static_cast<double>(v) / 255.0 - 0.5) * 2.0; }

Act to_input(const GrayImage& image) {
  Act a;
  a.h = image.height();
  a.w = image.width();
  a.x.resize(1, static_cast<Eigen::Index>(image.size()));
  const auto px = image.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) a.x(0, static_cast<Eigen::Index>(i)) = normalize_pixel(px[i]);
  return a;
}

ProbMap to_probmap(const MatrixXd& probs, int width, int height) {
  const Eigen::Index n = probs.cols();
  std::vector<double> values(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index c = 0; c < probs.rows(); ++c) {
    for (Eigen::Index p = 0; p < n; ++p) values[static_cast<std::size_t>(c * n + p)] = probs(c, p);
  }
  return ProbMap(width, height, static_cast<int>(probs.rows()), std::move(values));
}

std::vector<MatrixXd> zero_grads(const ModelParams& params) {
  std::vector<MatrixXd> g;
  g.reserve(params.tensors().size());
  for (const auto& t : params.tensors()) g.push_back(MatrixXd::Zero(t.value.rows(), t.value.cols()));
  return g;
}

// Mean cross-entropy; dlogits receives (P - Y) / N.
double cross_entropy(const MatrixXd& probs, std::span<const std::uint8_t> membrane,
                     MatrixXd& dlogits) {
  const Eigen::Index n = probs.cols();
  dlogits = probs / static_cast<double>(n);
  double loss = 0.0;
  for (Eigen::Index p = 0; p < n; ++p) {
    const Eigen::Index cls = membrane[static_cast<std::size_t>(p)] ? 0 : 1;
    loss -= std::log(std::max(probs(cls, p), 1e-300));
    dlogits(cls, p) -= 1.0 / static_cast<double>(n);
  }
  return loss / static_cast<double>(n);
}

// Crop + dihedral transform of an image/mask pair.
struct TrainingView {
  Act input;
  std::vector<std::uint8_t> membrane;
};

TrainingView make_view(const Sample& s, const ModelConfig& cfg, const TrainConfig& tc,
                       SeededRng& rng) {
  const GrayImage& img = s.image;
  const auto mask = membrane_mask(*s.labels);
  const int cw = tc.random_crop ? std::min(cfg.input_size, img.width()) : img.width();
  const int ch = tc.random_crop ? std::min(cfg.input_size, img.height()) : img.height();
  check_image_shape(cfg, cw, ch);
  const int ox = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(img.width() - cw + 1)));
  const int oy = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(img.height() - ch + 1)));
  const int transform = tc.augment ? static_cast<int>(rng.uniform_index(8)) : 0;
  const bool transpose = (transform & 4) != 0;
  const bool flip_x = (transform & 1) != 0;
  const bool flip_y = (transform & 2) != 0;

  TrainingView v;
  v.input.w = transpose ? ch : cw;
  v.input.h = transpose ? cw : ch;
  v.input.x.resize(1, static_cast<Eigen::Index>(cw) * ch);
  v.membrane.resize(static_cast<std::size_t>(cw) * ch);
  for (int y = 0; y < v.input.h; ++y) {
    for (int x = 0; x < v.input.w; ++x) {
      int sx = transpose ? y : x;
      int sy = transpose ? x : y;
      if (flip_x) sx = cw - 1 - sx;
      if (flip_y) sy = ch - 1 - sy;
      const int gx = ox + sx;
      const int gy = oy + sy;
      const int p = y * v.input.w + x;
      v.input.x(0, p) = normalize_pixel(img.at(gx, gy));
      v.membrane[static_cast<std::size_t>(p)] =
          mask[static_cast<std::size_t>(gy) * img.width() + gx];
    }
  }
  return v;
}

void adam_update(ModelParams& params, const std::vector<MatrixXd>& grads, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  auto& m = params.first_moment();
  auto& v = params.second_moment();
  auto tensors = params.tensors();
  if (m.size() != tensors.size()) {
    m.clear();
    v.clear();
    for (const auto& t : tensors) {
      m.push_back(MatrixXd::Zero(t.value.rows(), t.value.cols()));
      v.push_back(MatrixXd::Zero(t.value.rows(), t.value.cols()));
    }
    params.adam_steps() = 0;
  }
  const long long step = ++params.adam_steps();
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grads[i];
    v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grads[i].cwiseProduct(grads[i]);
    tensors[i].value.array() -=
        lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + kEps);
  }
}

}  // namespace

std::size_t architecture_parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& s : tensor_specs(config, nullptr)) {
    n += static_cast<std::size_t>(s.rows) * static_cast<std::size_t>(s.cols);
  }
  return n;
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  SeededRng rng(seed);
  std::vector<ParamTensor> tensors;
  for (const auto& s : tensor_specs(config, nullptr)) {
    ParamTensor t{s.name, MatrixXd::Zero(s.rows, s.cols)};
    if (s.fan_in > 0) {
      const double stddev = std::sqrt(2.0 / s.fan_in);
      double* d = t.value.data();
      for (Eigen::Index i = 0; i < t.value.size(); ++i) d[i] = rng.normal() * stddev;
    }
    tensors.push_back(std::move(t));
  }
  return ModelParams(config, std::move(tensors));
}

TrainResult train_steps(const ModelParams& params, std::span<const Sample* const> labeled,
                        const TrainConfig& config, int steps) {
  if (steps < 1) throw Error(ErrorCode::kInvalidSteps, "step count must be >= 1");
  if (labeled.empty()) throw Error(ErrorCode::kNoLabels, "labeled set is empty");
  if (config.batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  for (const Sample* s : labeled) {
    if (!s->labels) throw Error(ErrorCode::kNoLabels, "sample '" + s->id + "' has no labels");
  }

  TrainResult result{params, {}, 0};
  ModelParams& p = result.params;
  SeededRng rng(config.seed);
  const int window = std::max(1, config.convergence_window);

  for (int step = 0; step < steps; ++step) {
    auto grads = zero_grads(p);
    double loss = 0.0;
    for (int b = 0; b < config.batch_size; ++b) {
      const Sample& s = *labeled[rng.uniform_index(labeled.size())];
      TrainingView view = make_view(s, p.config(), config, rng);
      Network net(p, &rng);
      Cache cache;
      const auto r = net.forward(view.input, &cache);
      MatrixXd dlogits;
      loss += cross_entropy(r.probs, view.membrane, dlogits);
      net.backward(cache, dlogits, grads);
    }
    if (config.batch_size > 1) {
      for (auto& g : grads) g /= static_cast<double>(config.batch_size);
    }
    adam_update(p, grads, config.learning_rate);
    result.loss_history.push_back(loss / config.batch_size);
    result.steps_run = step + 1;

    if (config.convergence_tolerance > 0.0 && result.steps_run >= 2 * window) {
      const auto& h = result.loss_history;
      double recent = 0.0;
      double before = 0.0;
      for (int i = 0; i < window; ++i) {
        recent += h[h.size() - 1 - i];
        before += h[h.size() - 1 - window - i];
      }
      if (before > 0.0 && (before - recent) / before < config.convergence_tolerance) break;
    }
  }
  return result;
}

ProbMap predict(const ModelParams& params, const GrayImage& image) {
  check_image_shape(params.config(), image.width(), image.height());
  Network net(params, nullptr);
  const auto r = net.forward(to_input(image), nullptr);
  return to_probmap(r.probs, image.width(), image.height());
}

ProbMap predict_stochastic(const ModelParams& params, const GrayImage& image,
                           std::uint64_t seed) {
  check_image_shape(params.config(), image.width(), image.height());
  SeededRng rng(seed);
  Network net(params, &rng);
  const auto r = net.forward(to_input(image), nullptr);
  return to_probmap(r.probs, image.width(), image.height());
}

ForwardView inspect(const ModelParams& params, const GrayImage& image) {
  check_image_shape(params.config(), image.width(), image.height());
  Network net(params, nullptr);
  auto r = net.forward(to_input(image), nullptr);
  std::vector<double> pooled(static_cast<std::size_t>(r.bottleneck.rows()));
  for (Eigen::Index c = 0; c < r.bottleneck.rows(); ++c) {
    pooled[static_cast<std::size_t>(c)] = r.bottleneck.row(c).maxCoeff();
  }
  return {to_probmap(r.probs, image.width(), image.height()), std::move(r.penult.x),
          EmbeddingVec(std::move(pooled))};
}

EmbeddingVec embed(const ModelParams& params, const GrayImage& image) {
  return inspect(params, image).embedding;
}

LossAndGradient loss_and_gradient(const ModelParams& params, const GrayImage& image,
                                  std::span<const std::uint8_t> membrane,
                                  std::optional<std::uint64_t> dropout_seed) {
  check_image_shape(params.config(), image.width(), image.height());
  if (membrane.size() != image.size()) {
    throw Error(ErrorCode::kShapeError, "membrane mask size does not match image");
  }
  std::optional<SeededRng> rng;
  if (dropout_seed) rng.emplace(*dropout_seed);
  Network net(params, rng ? &*rng : nullptr);
  Cache cache;
  const auto r = net.forward(to_input(image), &cache);
  LossAndGradient out;
  MatrixXd dlogits;
  out.loss = cross_entropy(r.probs, membrane, dlogits);
  out.gradient = zero_grads(params);
  net.backward(cache, dlogits, out.gradient);
  return out;
}

void save_checkpoint(const ModelParams& params, const fs::path& prefix) {
  std::vector<std::uint8_t> blob;
  json table = json::array();
  for (const auto& t : params.tensors()) {
    const auto* b = reinterpret_cast<const std::uint8_t*>(t.value.data());
    blob.insert(blob.end(), b, b + static_cast<std::size_t>(t.value.size()) * sizeof(double));
    table.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  }
  const ModelConfig& c = params.config();
  json desc = {{"format", "emadapt-unet-v1"},
               {"architecture",
                {{"depth", c.depth},
                 {"base_channels", c.base_channels},
                 {"num_classes", c.num_classes},
                 {"dropout_rate", c.dropout_rate},
                 {"input_size", c.input_size},
                 {"in_channels", 1},
                 {"dropout_placement", "after every encoder/decoder conv block"}}},
               {"tensors", table},
               {"dtype", "float64-le"},
               {"parameter_count", params.parameter_count()},
               {"hash", params.hash()}};
  write_file(fs::path(prefix.string() + ".bin"), blob);
  write_text(fs::path(prefix.string() + ".json"), desc.dump(2) + "\n");
}

ModelParams load_checkpoint(const fs::path& prefix) {
  const json desc = json::parse(read_text(fs::path(prefix.string() + ".json")));
  const auto blob = read_file(fs::path(prefix.string() + ".bin"));
  const auto& a = desc.at("architecture");
  ModelConfig cfg;
  cfg.depth = a.at("depth").get<int>();
  cfg.base_channels = a.at("base_channels").get<int>();
  cfg.num_classes = a.at("num_classes").get<int>();
  cfg.dropout_rate = a.at("dropout_rate").get<double>();
  cfg.input_size = a.at("input_size").get<int>();
  cfg.validate();

  ModelParams fresh = init_model(cfg, 0);
  std::size_t offset = 0;
  const auto& table = desc.at("tensors");
  if (table.size() != fresh.tensors().size()) {
    throw Error(ErrorCode::kParse, "checkpoint tensor table does not match architecture");
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto& t = fresh.tensors()[i];
    if (table[i].at("name").get<std::string>() != t.name ||
        table[i].at("rows").get<Eigen::Index>() != t.value.rows() ||
        table[i].at("cols").get<Eigen::Index>() != t.value.cols()) {
      throw Error(ErrorCode::kParse, "checkpoint tensor '" + t.name + "' has wrong shape");
    }
    const std::size_t bytes = static_cast<std::size_t>(t.value.size()) * sizeof(double);
    if (offset + bytes > blob.size()) {
      throw Error(ErrorCode::kTruncatedPayload, "checkpoint blob is truncated");
    }
    std::memcpy(t.value.data(), blob.data() + offset, bytes);
    offset += bytes;
  }
  if (offset != blob.size()) throw Error(ErrorCode::kParse, "checkpoint blob has trailing bytes");
  if (fresh.hash() != desc.at("hash").get<std::string>()) {
    throw Error(ErrorCode::kParse, "checkpoint hash mismatch");
  }
  return fresh;
}

}  // namespace emadapt
