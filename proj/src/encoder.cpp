#include "oscar/encoder.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oscar {

using nlohmann::json;

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr char kCheckpointMagic[] = "OSCK";
constexpr uint32_t kCheckpointVersion = 1;

double activate(double x, Activation act) {
  if (act == Activation::relu) return x > 0.0 ? x : 0.0;
  return x > 0.0 ? x : std::expm1(x);  // ELU, alpha = 1
}

double activate_grad(double x, Activation act) {
  if (act == Activation::relu) return x > 0.0 ? 1.0 : 0.0;
  return x > 0.0 ? 1.0 : std::exp(x);
}

// "same" padding split for a stride-1 convolution.
void pad_split(Index kernel, Index& left, Index& right) {
  left = (kernel - 1) / 2;
  right = kernel / 2;
}

// Unrolls X (in_ch x L) into a (in_ch*k x L) column matrix with zero padding.
Mat im2col(const Mat& x, Index kernel) {
  Index pad_left, pad_right;
  pad_split(kernel, pad_left, pad_right);
  (void)pad_right;
  const Index in_ch = x.rows(), len = x.cols();
  Mat col = Mat::Zero(in_ch * kernel, len);
  for (Index t = 0; t < len; ++t)
    for (Index k = 0; k < kernel; ++k) {
      const Index src = t + k - pad_left;
      if (src >= 0 && src < len) col.block(k * in_ch, t, in_ch, 1) = x.col(src);
    }
  return col;
}

// Folds a column-matrix gradient back onto the (in_ch x L) input layout.
Mat col2im(const Mat& dcol, Index in_ch, Index len, Index kernel) {
  Index pad_left, pad_right;
  pad_split(kernel, pad_left, pad_right);
  (void)pad_right;
  Mat dx = Mat::Zero(in_ch, len);
  for (Index t = 0; t < len; ++t)
    for (Index k = 0; k < kernel; ++k) {
      const Index src = t + k - pad_left;
      if (src >= 0 && src < len) dx.col(src) += dcol.block(k * in_ch, t, in_ch, 1);
    }
  return dx;
}

}  // namespace

EncoderConfig EncoderConfig::tiny() {
  EncoderConfig cfg;
  cfg.input_dim = 512;
  cfg.embed_dim = 32;
  cfg.block_channels = {8, 8, 16, 16};
  cfg.kernel_size = 5;
  cfg.pool_size = 4;
  return cfg;
}

void Encoder::build_layout() {
  layout_.clear();
  Index offset = 0;
  auto add = [&](const std::string& name, Index rows, Index cols) {
    layout_.push_back({name, offset, rows, cols});
    offset += rows * cols;
  };
  Index in_ch = 1;
  for (int b = 0; b < 4; ++b) {
    const Index out_ch = cfg_.block_channels[b];
    const std::string prefix = "block" + std::to_string(b);
    add(prefix + ".conv1.weight", out_ch, in_ch * cfg_.kernel_size);
    add(prefix + ".conv1.bias", out_ch, 1);
    if (cfg_.use_batch_norm) {
      add(prefix + ".bn1.gamma", out_ch, 1);
      add(prefix + ".bn1.beta", out_ch, 1);
    }
    add(prefix + ".conv2.weight", out_ch, out_ch * cfg_.kernel_size);
    add(prefix + ".conv2.bias", out_ch, 1);
    if (cfg_.use_batch_norm) {
      add(prefix + ".bn2.gamma", out_ch, 1);
      add(prefix + ".bn2.beta", out_ch, 1);
    }
    in_ch = out_ch;
  }
  Index len = cfg_.input_dim;
  for (int b = 0; b < 4; ++b) {
    len /= cfg_.pool_size;
    if (len < 1)
      throw std::invalid_argument("EncoderConfig: input_dim too small for pooling");
  }
  add("linear.weight", cfg_.embed_dim, cfg_.block_channels[3] * len);
  add("linear.bias", cfg_.embed_dim, 1);
  params_ = Vec::Zero(offset);
}

Encoder::Encoder(const EncoderConfig& config, uint64_t seed) : cfg_(config) {
  if (cfg_.embed_dim <= 0 || cfg_.input_dim <= 0)
    throw std::invalid_argument("EncoderConfig: dimensions must be positive");
  build_layout();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const ParamInfo& pi : layout_) {
    Eigen::Map<Mat> m(params_.data() + pi.offset, pi.rows, pi.cols);
    if (pi.name.find(".weight") != std::string::npos) {
      const double scale = std::sqrt(2.0 / static_cast<double>(pi.cols));
      for (Index i = 0; i < pi.rows; ++i)
        for (Index j = 0; j < pi.cols; ++j) m(i, j) = scale * gauss(rng);
    } else if (pi.name.find(".gamma") != std::string::npos) {
      m.setOnes();
    } else {
      m.setZero();  // biases and betas
    }
  }
  if (cfg_.use_batch_norm) {
    for (int b = 0; b < 4; ++b)
      for (int l = 0; l < 2; ++l)
        bn_.push_back({Vec::Zero(cfg_.block_channels[b]),
                       Vec::Ones(cfg_.block_channels[b])});
  }
}

void Encoder::set_params(const Vec& p) {
  if (p.size() != params_.size())
    throw std::invalid_argument("set_params: size mismatch");
  params_ = p;
}

std::vector<ParamInfo> Encoder::parameter_manifest() const { return layout_; }

Eigen::Map<const Mat> Encoder::view(const ParamInfo& pi) const {
  return Eigen::Map<const Mat>(params_.data() + pi.offset, pi.rows, pi.cols);
}

const ParamInfo& Encoder::info(const std::string& name) const {
  for (const ParamInfo& pi : layout_)
    if (pi.name == name) return pi;
  throw std::invalid_argument("unknown parameter: " + name);
}

Mat Encoder::forward(const Mat& inputs, bool training, ForwardCache* cache,
                     std::mt19937_64* dropout_rng) {
  if (inputs.cols() != cfg_.input_dim)
    throw std::invalid_argument("encode: input length != input_dim");
  const Index batch = inputs.rows();
  if (cache) {
    *cache = ForwardCache{};
    cache->training = training;
    cache->batch = batch;
  }

  // Per-sample activations, (channels x length).
  std::vector<Mat> acts(batch);
  for (Index s = 0; s < batch; ++s) acts[s] = inputs.row(s);

  int bn_idx = 0;
  for (int b = 0; b < 4; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    const Activation act = cfg_.block_activations[b];
    BlockCache* bc = cache ? &cache->blocks[b] : nullptr;

    for (int l = 1; l <= 2; ++l) {
      const std::string conv = prefix + ".conv" + std::to_string(l);
      const auto W = view(info(conv + ".weight"));
      const auto bias = view(info(conv + ".bias"));
      std::vector<Mat>* col_cache = bc ? (l == 1 ? &bc->col1 : &bc->col2) : nullptr;
      for (Index s = 0; s < batch; ++s) {
        Mat col = im2col(acts[s], cfg_.kernel_size);
        acts[s] = (W * col).colwise() + bias.col(0);
        if (col_cache) col_cache->push_back(std::move(col));
      }

      if (cfg_.use_batch_norm) {
        const auto gamma = view(info(prefix + ".bn" + std::to_string(l) + ".gamma"));
        const auto beta = view(info(prefix + ".bn" + std::to_string(l) + ".beta"));
        const Index ch = acts[0].rows(), len = acts[0].cols();
        Vec mean(ch), var(ch);
        if (training) {
          const double count = static_cast<double>(batch * len);
          mean.setZero();
          for (Index s = 0; s < batch; ++s) mean += acts[s].rowwise().sum();
          mean /= count;
          var.setZero();
          for (Index s = 0; s < batch; ++s)
            var += (acts[s].colwise() - mean).array().square().matrix().rowwise().sum();
          var /= count;
          bn_[bn_idx].mean = (1.0 - kBnMomentum) * bn_[bn_idx].mean + kBnMomentum * mean;
          bn_[bn_idx].var = (1.0 - kBnMomentum) * bn_[bn_idx].var + kBnMomentum * var;
        } else {
          mean = bn_[bn_idx].mean;
          var = bn_[bn_idx].var;
        }
        Vec invstd = (var.array() + kBnEps).rsqrt();
        std::vector<Mat>* xhat_cache = bc ? (l == 1 ? &bc->xhat1 : &bc->xhat2) : nullptr;
        if (bc) (l == 1 ? bc->invstd1 : bc->invstd2) = invstd;
        for (Index s = 0; s < batch; ++s) {
          Mat xhat = ((acts[s].colwise() - mean).array().colwise() * invstd.array()).matrix();
          acts[s] = (xhat.array().colwise() * gamma.col(0).array()).matrix().colwise() +
                    beta.col(0);
          if (xhat_cache) xhat_cache->push_back(std::move(xhat));
        }
        ++bn_idx;
      }

      std::vector<Mat>* pre_cache = bc ? (l == 1 ? &bc->pre1 : &bc->pre2) : nullptr;
      for (Index s = 0; s < batch; ++s) {
        if (pre_cache) pre_cache->push_back(acts[s]);
        acts[s] = acts[s].unaryExpr([act](double x) { return activate(x, act); });
      }
    }

    // Non-overlapping max pool over positions.
    const Index ch = acts[0].rows();
    const Index out_len = acts[0].cols() / cfg_.pool_size;
    for (Index s = 0; s < batch; ++s) {
      Mat pooled(ch, out_len);
      Eigen::MatrixXi argmax(ch, out_len);
      for (Index c = 0; c < ch; ++c)
        for (Index t = 0; t < out_len; ++t) {
          Index best = t * cfg_.pool_size;
          double best_val = acts[s](c, best);
          for (Index k = 1; k < cfg_.pool_size; ++k) {
            const Index pos = t * cfg_.pool_size + k;
            if (acts[s](c, pos) > best_val) {
              best_val = acts[s](c, pos);
              best = pos;
            }
          }
          pooled(c, t) = best_val;
          argmax(c, t) = static_cast<int>(best);
        }
      acts[s] = std::move(pooled);
      if (bc) bc->pool_argmax.push_back(std::move(argmax));
    }

    if (training && cfg_.dropout_rate > 0.0 && dropout_rng) {
      std::bernoulli_distribution keep(1.0 - cfg_.dropout_rate);
      const double scale = 1.0 / (1.0 - cfg_.dropout_rate);
      for (Index s = 0; s < batch; ++s) {
        Mat mask(acts[s].rows(), acts[s].cols());
        for (Index i = 0; i < mask.size(); ++i)
          mask.data()[i] = keep(*dropout_rng) ? scale : 0.0;
        acts[s] = acts[s].cwiseProduct(mask);
        if (bc) bc->dropout_mask.push_back(std::move(mask));
      }
    }
  }

  // Flatten (row-major over channels) and apply the linear layer.
  const Index feat = acts[0].size();
  Mat flat(batch, feat);
  for (Index s = 0; s < batch; ++s)
    flat.row(s) = Eigen::Map<const Vec>(acts[s].data(), feat).transpose();
  if (cache) cache->flat = flat;

  const auto W = view(info("linear.weight"));
  const auto bias = view(info("linear.bias"));
  Mat out = flat * W.transpose();
  out.rowwise() += bias.col(0).transpose();
  return out;
}

Mat Encoder::encode(const Mat& inputs) const {
  return const_cast<Encoder*>(this)->forward(inputs, /*training=*/false, nullptr);
}

Vec Encoder::backward(const ForwardCache& cache, const Mat& grad_embeddings) const {
  Vec grad = Vec::Zero(params_.size());
  auto gview = [&](const ParamInfo& pi) {
    return Eigen::Map<Mat>(grad.data() + pi.offset, pi.rows, pi.cols);
  };
  const Index batch = cache.batch;

  // Linear layer.
  {
    const auto& pi_w = info("linear.weight");
    gview(pi_w) = grad_embeddings.transpose() * cache.flat;
    gview(info("linear.bias")).col(0) = grad_embeddings.colwise().sum().transpose();
  }
  Mat dflat = grad_embeddings * view(info("linear.weight"));

  // Unflatten into per-sample (channels x length) gradients.
  const Index ch4 = cfg_.block_channels[3];
  const Index len4 = dflat.cols() / ch4;
  std::vector<Mat> dacts(batch);
  for (Index s = 0; s < batch; ++s) {
    Vec row = dflat.row(s).transpose();
    dacts[s] = Eigen::Map<const Mat>(row.data(), ch4, len4);
  }

  for (int b = 3; b >= 0; --b) {
    const BlockCache& bc = cache.blocks[b];
    const std::string prefix = "block" + std::to_string(b);
    const Activation act = cfg_.block_activations[b];

    if (!bc.dropout_mask.empty())
      for (Index s = 0; s < batch; ++s)
        dacts[s] = dacts[s].cwiseProduct(bc.dropout_mask[s]);

    // Max pool: route gradients to the recorded argmax positions.
    for (Index s = 0; s < batch; ++s) {
      const Eigen::MatrixXi& argmax = bc.pool_argmax[s];
      const Index ch = dacts[s].rows();
      const Index in_len = bc.pre2[s].cols();
      Mat dx = Mat::Zero(ch, in_len);
      for (Index c = 0; c < ch; ++c)
        for (Index t = 0; t < dacts[s].cols(); ++t)
          dx(c, argmax(c, t)) += dacts[s](c, t);
      dacts[s] = std::move(dx);
    }

    for (int l = 2; l >= 1; --l) {
      const std::string conv = prefix + ".conv" + std::to_string(l);
      const std::vector<Mat>& pre = l == 1 ? bc.pre1 : bc.pre2;
      for (Index s = 0; s < batch; ++s)
        dacts[s] = dacts[s].cwiseProduct(pre[s].unaryExpr(
            [act](double x) { return activate_grad(x, act); }));

      if (cfg_.use_batch_norm) {
        const auto gamma = view(info(prefix + ".bn" + std::to_string(l) + ".gamma"));
        const std::vector<Mat>& xhat = l == 1 ? bc.xhat1 : bc.xhat2;
        const Vec& invstd = l == 1 ? bc.invstd1 : bc.invstd2;
        const Index ch = dacts[0].rows(), len = dacts[0].cols();
        const double count = static_cast<double>(batch * len);

        Vec dgamma = Vec::Zero(ch), dbeta = Vec::Zero(ch);
        for (Index s = 0; s < batch; ++s) {
          dgamma += dacts[s].cwiseProduct(xhat[s]).rowwise().sum();
          dbeta += dacts[s].rowwise().sum();
        }
        gview(info(prefix + ".bn" + std::to_string(l) + ".gamma")).col(0) += dgamma;
        gview(info(prefix + ".bn" + std::to_string(l) + ".beta")).col(0) += dbeta;

        if (cache.training) {
          // dL/dx = gamma*invstd/N * (N*dy - sum(dy) - xhat*sum(dy*xhat))
          for (Index s = 0; s < batch; ++s) {
            Mat term = count * dacts[s];
            term.colwise() -= dbeta;
            term -= (xhat[s].array().colwise() * dgamma.array()).matrix();
            dacts[s] = (term.array().colwise() *
                        (gamma.col(0).array() * invstd.array() / count))
                           .matrix();
          }
        } else {
          for (Index s = 0; s < batch; ++s)
            dacts[s] = (dacts[s].array().colwise() *
                        (gamma.col(0).array() * invstd.array()))
                           .matrix();
        }
      }

      const auto W = view(info(conv + ".weight"));
      const std::vector<Mat>& cols = l == 1 ? bc.col1 : bc.col2;
      auto gw = gview(info(conv + ".weight"));
      auto gb = gview(info(conv + ".bias"));
      const Index in_ch = W.cols() / cfg_.kernel_size;
      for (Index s = 0; s < batch; ++s) {
        gw += dacts[s] * cols[s].transpose();
        gb.col(0) += dacts[s].rowwise().sum();
        Mat dcol = W.transpose() * dacts[s];
        dacts[s] = col2im(dcol, in_ch, dacts[s].cols(), cfg_.kernel_size);
      }
    }
  }
  return grad;
}

std::string Encoder::config_json() const {
  json j;
  j["input_dim"] = cfg_.input_dim;
  j["embed_dim"] = cfg_.embed_dim;
  j["block_channels"] = cfg_.block_channels;
  j["kernel_size"] = cfg_.kernel_size;
  j["pool_size"] = cfg_.pool_size;
  json acts = json::array();
  for (Activation a : cfg_.block_activations)
    acts.push_back(a == Activation::elu ? "elu" : "relu");
  j["block_activations"] = acts;
  j["use_batch_norm"] = cfg_.use_batch_norm;
  j["dropout_rate"] = cfg_.dropout_rate;
  return j.dump();
}

namespace {

EncoderConfig config_from_json(const std::string& text) {
  json j = json::parse(text);
  EncoderConfig cfg;
  cfg.input_dim = j.at("input_dim").get<Index>();
  cfg.embed_dim = j.at("embed_dim").get<Index>();
  auto ch = j.at("block_channels").get<std::vector<Index>>();
  std::copy_n(ch.begin(), 4, cfg.block_channels.begin());
  cfg.kernel_size = j.at("kernel_size").get<Index>();
  cfg.pool_size = j.at("pool_size").get<Index>();
  auto acts = j.at("block_activations").get<std::vector<std::string>>();
  for (int i = 0; i < 4; ++i)
    cfg.block_activations[i] = acts[i] == "elu" ? Activation::elu : Activation::relu;
  cfg.use_batch_norm = j.at("use_batch_norm").get<bool>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  return cfg;
}

void write_vec(std::ofstream& out, const Vec& v) {
  const uint64_t n = static_cast<uint64_t>(v.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
}

Vec read_vec(std::ifstream& in) {
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  Vec v(static_cast<Index>(n));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

void Encoder::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 4);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion),
            sizeof(kCheckpointVersion));
  const std::string cfg = config_json();
  const uint64_t cfg_len = cfg.size();
  out.write(reinterpret_cast<const char*>(&cfg_len), sizeof(cfg_len));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_vec(out, params_);
  const uint64_t n_bn = bn_.size();
  out.write(reinterpret_cast<const char*>(&n_bn), sizeof(n_bn));
  for (const BnStats& s : bn_) {
    write_vec(out, s.mean);
    write_vec(out, s.var);
  }
}

Encoder Encoder::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (std::string(magic, 4) != kCheckpointMagic || version != kCheckpointVersion)
    throw std::runtime_error("bad checkpoint header: " + path);
  uint64_t cfg_len = 0;
  in.read(reinterpret_cast<char*>(&cfg_len), sizeof(cfg_len));
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));

  Encoder enc(config_from_json(cfg_text), /*seed=*/0);
  enc.params_ = read_vec(in);
  uint64_t n_bn = 0;
  in.read(reinterpret_cast<char*>(&n_bn), sizeof(n_bn));
  enc.bn_.clear();
  for (uint64_t i = 0; i < n_bn; ++i) {
    BnStats s;
    s.mean = read_vec(in);
    s.var = read_vec(in);
    enc.bn_.push_back(std::move(s));
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return enc;
}

}  // namespace oscar
