#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oscar/encoder.hpp"
#include "oscar/loss.hpp"
#include "oscar/trace.hpp"

namespace oscar {

// Which loss drives the optimization; proxy_only matches beta = 0,
// sample_only drops the proxy term (used by the ablation grid).
enum class LossMode { combined, proxy_only, sample_only };

struct TrainConfig {
  Index epochs = 30;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  Index early_stop_patience = 0;  // 0 disables early stopping
  LossMode loss_mode = LossMode::combined;
  // Identification settings used for the validation Recall@5 checkpoint
  // metric.
  Index val_neighbors = 40;    // b
  double val_score_weight = 2.0;  // theta
};

struct EpochLog {
  Index epoch = 0;
  double proxy_loss = 0.0;
  double sample_loss = 0.0;
  double total_loss = 0.0;
  double val_recall5 = 0.0;
  Index batches_skipped = 0;
};

struct TrainResult {
  Encoder encoder;
  ProxySet proxies;
  std::vector<EpochLog> log;
  Index best_epoch = 0;
};

// First-order adaptive-moment optimizer over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(Index n, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step(Vec& params, const Vec& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  Index t_ = 0;
  Vec m_, v_;
};

// Jointly optimizes encoder weights and proxies on the training set,
// selecting the checkpoint with the best validation Recall@5.
TrainResult train(const Dataset& dataset_train, const Dataset& dataset_val,
                  const EncoderConfig& encoder_cfg, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg);

// One embedding per trace, order preserved.
struct EmbeddedSample {
  Vec embedding;
  LabelVec labels;
};
std::vector<EmbeddedSample> embed_dataset(const Encoder& encoder,
                                          const Dataset& dataset);

// Encoder manifest plus the attached proxy matrix entry.
std::vector<ParamInfo> parameter_manifest(const Encoder& encoder,
                                          const ProxySet* proxies);

// Checkpoint directory layout: {run}/best.ckpt, {run}/proxies.bin,
// {run}/log.ndjson, {run}/config-echo.json.
void save_run(const std::filesystem::path& run_dir, const TrainResult& result,
              const std::string& config_echo);
void save_proxies(const ProxySet& proxies, const std::filesystem::path& path);
ProxySet load_proxies(const std::filesystem::path& path);

}  // namespace oscar
