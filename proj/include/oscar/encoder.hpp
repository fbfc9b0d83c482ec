#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "oscar/types.hpp"

namespace oscar {

enum class Activation { elu, relu };

// Four convolutional blocks (two stride-1 "same" convolutions, batch norm,
// activation, non-overlapping max pool) followed by a single linear layer
// down to embed_dim.
struct EncoderConfig {
  Index input_dim = 10000;   // d_i
  Index embed_dim = 512;     // d_o
  std::array<Index, 4> block_channels = {32, 64, 128, 256};
  Index kernel_size = 8;
  Index pool_size = 8;
  std::array<Activation, 4> block_activations = {
      Activation::elu, Activation::relu, Activation::relu, Activation::relu};
  bool use_batch_norm = true;
  double dropout_rate = 0.0;

  // Desk-scale preset for tests and synthetic experiments.
  static EncoderConfig tiny();
};

struct ParamInfo {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;

  Index count() const { return rows * cols; }
};

// Per-forward intermediate state consumed by backward(). Activations are
// stored per sample as (channels x length) matrices.
struct BlockCache {
  std::vector<Mat> col1, col2;             // im2col matrices (in_ch*k x L)
  std::vector<Mat> xhat1, xhat2;           // batch-norm normalized values
  Vec invstd1, invstd2;                    // per-channel 1/sqrt(var+eps)
  std::vector<Mat> pre1, pre2;             // activation inputs
  std::vector<Eigen::MatrixXi> pool_argmax;
  std::vector<Mat> dropout_mask;
};

struct ForwardCache {
  bool training = false;
  Index batch = 0;
  std::array<BlockCache, 4> blocks;
  Mat flat;  // batch x features, input of the linear layer
};

class Encoder {
 public:
  Encoder(const EncoderConfig& config, uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  Index num_params() const { return params_.size(); }
  const Vec& params() const { return params_; }
  void set_params(const Vec& p);

  // Named shapes of every trainable parameter, in flat-vector order.
  std::vector<ParamInfo> parameter_manifest() const;

  // inputs: batch x input_dim with entries in {+1,-1,0}. Returns
  // batch x embed_dim. Training mode uses batch statistics (and updates
  // running ones); inference mode is deterministic for fixed weights.
  Mat forward(const Mat& inputs, bool training, ForwardCache* cache,
              std::mt19937_64* dropout_rng = nullptr);
  Mat encode(const Mat& inputs) const;  // inference forward

  // Backpropagates dLoss/dEmbeddings through the cached forward pass;
  // returns the flat gradient w.r.t. params().
  Vec backward(const ForwardCache& cache, const Mat& grad_embeddings) const;

  void save(const std::string& path) const;
  static Encoder load(const std::string& path);

  std::string config_json() const;

 private:
  struct BnStats {
    Vec mean;
    Vec var;
  };

  EncoderConfig cfg_;
  Vec params_;
  std::vector<ParamInfo> layout_;
  std::vector<BnStats> bn_;  // running stats, one per conv layer

  Eigen::Map<const Mat> view(const ParamInfo& pi) const;
  const ParamInfo& info(const std::string& name) const;
  void build_layout();
};

}  // namespace oscar
