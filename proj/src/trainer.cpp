#include "oscar/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "oscar/identify.hpp"
#include "oscar/metrics.hpp"

namespace oscar {

using nlohmann::json;

AdamOptimizer::AdamOptimizer(Index n, double learning_rate, double beta1,
                             double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Vec::Zero(n)), v_(Vec::Zero(n)) {}

void AdamOptimizer::step(Vec& params, const Vec& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params -= (lr_ / bias1) * m_.cwiseQuotient(
                ((v_ / bias2).cwiseSqrt().array() + eps_).matrix());
}

std::vector<EmbeddedSample> embed_dataset(const Encoder& encoder,
                                          const Dataset& dataset) {
  std::vector<EmbeddedSample> out;
  out.reserve(static_cast<size_t>(dataset.size()));
  const Index d_i = encoder.config().input_dim;
  constexpr Index kChunk = 64;
  for (Index start = 0; start < dataset.size(); start += kChunk) {
    const Index n = std::min<Index>(kChunk, dataset.size() - start);
    Mat inputs(n, d_i);
    for (Index s = 0; s < n; ++s)
      inputs.row(s) =
          to_model_input(dataset.traces[start + s], d_i).padded_directions;
    Mat emb = encoder.encode(inputs);
    for (Index s = 0; s < n; ++s)
      out.push_back({emb.row(s).transpose(), dataset.traces[start + s].labels});
  }
  return out;
}

std::vector<ParamInfo> parameter_manifest(const Encoder& encoder,
                                          const ProxySet* proxies) {
  std::vector<ParamInfo> manifest = encoder.parameter_manifest();
  if (proxies) {
    Index offset = encoder.num_params();
    manifest.push_back(
        {"proxies", offset, proxies->num_classes(), proxies->dim()});
  }
  return manifest;
}

namespace {

Eigen::MatrixXi batch_labels(const Dataset& ds, const std::vector<Index>& idx) {
  Eigen::MatrixXi labels(static_cast<Index>(idx.size()), ds.num_classes());
  for (size_t s = 0; s < idx.size(); ++s)
    labels.row(static_cast<Index>(s)) = ds.traces[idx[s]].labels.transpose();
  return labels;
}

double validation_recall5(const Encoder& encoder, const ProxySet& proxies,
                          const Dataset& train, const Dataset& val,
                          const TrainConfig& cfg) {
  if (val.size() == 0) return 0.0;
  auto refs = embed_dataset(encoder, train);
  IdentificationIndex index;
  index.proxies = proxies.proxies;
  index.references = Mat(static_cast<Index>(refs.size()), encoder.config().embed_dim);
  index.reference_labels =
      Eigen::MatrixXi(static_cast<Index>(refs.size()), train.num_classes());
  for (size_t i = 0; i < refs.size(); ++i) {
    index.references.row(static_cast<Index>(i)) = refs[i].embedding.transpose();
    index.reference_labels.row(static_cast<Index>(i)) = refs[i].labels.transpose();
  }
  index.neighbors = std::min<Index>(
      cfg.val_neighbors, std::min(index.num_classes(), index.num_references()));
  index.score_weight = cfg.val_score_weight;

  auto val_emb = embed_dataset(encoder, val);
  EvalReport report = evaluate(index, val_emb, {5}, {}, Protocol::closed);
  return report.recall_at.front().second;
}

LossResult batch_loss(LossMode mode, const Mat& emb, const Eigen::MatrixXi& labels,
                      const ProxySet& proxies, const LossConfig& loss_cfg,
                      bool with_grad) {
  switch (mode) {
    case LossMode::proxy_only: {
      LossConfig cfg = loss_cfg;
      cfg.beta = 0.0;
      return combined_loss(emb, labels, proxies, cfg, with_grad);
    }
    case LossMode::sample_only: {
      LossResult res = sample_loss(emb, labels, loss_cfg, with_grad);
      if (with_grad) res.grad_proxies = Mat::Zero(proxies.num_classes(), proxies.dim());
      return res;
    }
    case LossMode::combined:
    default:
      return combined_loss(emb, labels, proxies, loss_cfg, with_grad);
  }
}

}  // namespace

TrainResult train(const Dataset& dataset_train, const Dataset& dataset_val,
                  const EncoderConfig& encoder_cfg, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg) {
  if (train_cfg.batch_size < 2)
    throw DataError("train: batch_size must be >= 2 for pair mining");
  if (train_cfg.learning_rate < 0.0)
    throw DataError("train: learning_rate must be >= 0");
  if (dataset_train.num_classes() != dataset_val.num_classes())
    throw DataError("train: class catalogs of train and validation differ");

  const Index n = dataset_train.size();
  const Index w = dataset_train.num_classes();

  Encoder encoder(encoder_cfg, train_cfg.seed);
  ProxySet proxies = init_proxies(w, encoder_cfg.embed_dim, train_cfg.seed + 1);

  const Index n_enc = encoder.num_params();
  const Index n_proxy = w * encoder_cfg.embed_dim;
  AdamOptimizer opt(n_enc + n_proxy, train_cfg.learning_rate);
  Vec joint(n_enc + n_proxy);
  joint.head(n_enc) = encoder.params();
  joint.tail(n_proxy) = Eigen::Map<const Vec>(proxies.proxies.data(), n_proxy);

  std::mt19937_64 rng(train_cfg.seed);
  std::mt19937_64 dropout_rng(train_cfg.seed + 2);

  TrainResult result{std::move(encoder), std::move(proxies), {}, 0};
  Encoder best_encoder = result.encoder;  // includes batch-norm running stats
  Mat best_proxies = result.proxies.proxies;
  double best_recall = -1.0;
  Index epochs_since_best = 0;

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index d_i = encoder_cfg.input_dim;

  for (Index epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    Index batches = 0;

    for (Index start = 0; start + 1 < n; start += train_cfg.batch_size) {
      const Index bs = std::min<Index>(train_cfg.batch_size, n - start);
      if (bs < 2) break;
      std::vector<Index> idx(order.begin() + start, order.begin() + start + bs);

      Mat inputs(bs, d_i);
      for (Index s = 0; s < bs; ++s)
        inputs.row(s) =
            to_model_input(dataset_train.traces[idx[static_cast<size_t>(s)]], d_i)
                .padded_directions;
      Eigen::MatrixXi labels = batch_labels(dataset_train, idx);

      ForwardCache cache;
      Mat emb = result.encoder.forward(inputs, /*training=*/true, &cache,
                                       &dropout_rng);

      LossResult lr;
      try {
        lr = batch_loss(train_cfg.loss_mode, emb, labels, result.proxies,
                        loss_cfg, /*with_grad=*/true);
      } catch (const std::invalid_argument& e) {
        std::cerr << "epoch " << epoch << ": skipping batch at " << start
                  << ": " << e.what() << "\n";
        ++log.batches_skipped;
        continue;
      }

      Vec grad(n_enc + n_proxy);
      grad.head(n_enc) = result.encoder.backward(cache, lr.grad_embeddings);
      grad.tail(n_proxy) = Eigen::Map<const Vec>(lr.grad_proxies.data(), n_proxy);

      opt.step(joint, grad);
      result.encoder.set_params(joint.head(n_enc));
      result.proxies.proxies =
          Eigen::Map<const Mat>(joint.tail(n_proxy).data(), w,
                                encoder_cfg.embed_dim);

      log.proxy_loss += lr.proxy_loss;
      log.sample_loss += lr.sample_loss;
      log.total_loss += lr.total;
      ++batches;
    }
    if (batches > 0) {
      log.proxy_loss /= static_cast<double>(batches);
      log.sample_loss /= static_cast<double>(batches);
      log.total_loss /= static_cast<double>(batches);
    }

    log.val_recall5 = validation_recall5(result.encoder, result.proxies,
                                         dataset_train, dataset_val, train_cfg);
    result.log.push_back(log);

    if (log.val_recall5 > best_recall) {
      best_recall = log.val_recall5;
      best_encoder = result.encoder;
      best_proxies = result.proxies.proxies;
      result.best_epoch = epoch;
      epochs_since_best = 0;
    } else if (train_cfg.early_stop_patience > 0 &&
               ++epochs_since_best >= train_cfg.early_stop_patience) {
      break;
    }
  }

  result.encoder = std::move(best_encoder);
  result.proxies.proxies = best_proxies;
  return result;
}

void save_proxies(const ProxySet& proxies, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write proxies: " + path.string());
  const uint64_t rows = static_cast<uint64_t>(proxies.proxies.rows());
  const uint64_t cols = static_cast<uint64_t>(proxies.proxies.cols());
  out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  out.write(reinterpret_cast<const char*>(proxies.proxies.data()),
            static_cast<std::streamsize>(proxies.proxies.size() * sizeof(double)));
}

ProxySet load_proxies(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open proxies: " + path.string());
  uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  ProxySet ps;
  ps.proxies = Mat(static_cast<Index>(rows), static_cast<Index>(cols));
  in.read(reinterpret_cast<char*>(ps.proxies.data()),
          static_cast<std::streamsize>(ps.proxies.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated proxies file: " + path.string());
  return ps;
}

void save_run(const std::filesystem::path& run_dir, const TrainResult& result,
              const std::string& config_echo) {
  std::filesystem::create_directories(run_dir);
  result.encoder.save((run_dir / "best.ckpt").string());
  save_proxies(result.proxies, run_dir / "proxies.bin");
  {
    std::ofstream out(run_dir / "log.ndjson");
    for (const EpochLog& e : result.log) {
      json j;
      j["epoch"] = e.epoch;
      j["proxy_loss"] = e.proxy_loss;
      j["sample_loss"] = e.sample_loss;
      j["total_loss"] = e.total_loss;
      j["val_recall5"] = e.val_recall5;
      j["batches_skipped"] = e.batches_skipped;
      out << j.dump() << "\n";
    }
  }
  std::ofstream echo(run_dir / "config-echo.json");
  echo << config_echo << "\n";
}

}  // namespace oscar
