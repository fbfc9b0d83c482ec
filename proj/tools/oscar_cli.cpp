// Command-line entry point wiring the pipeline:
//   synth -> ingest -> augment -> train -> predict -> evaluate -> ablate
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oscar/augment.hpp"
#include "oscar/encoder.hpp"
#include "oscar/identify.hpp"
#include "oscar/loss.hpp"
#include "oscar/metrics.hpp"
#include "oscar/synth.hpp"
#include "oscar/trace.hpp"
#include "oscar/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oscar;

namespace {

fs::path run_root() {
  const char* env = std::getenv("OSCAR_RUN_ROOT");
  return env ? fs::path(env) : fs::path(".");
}

DatasetFormat parse_format(const std::string& s) {
  if (s == "ndjson") return DatasetFormat::ndjson;
  if (s == "csv-dir") return DatasetFormat::csv_dir;
  throw DataError("unknown dataset format: " + s);
}

IdentificationIndex build_index(const Encoder& encoder, const ProxySet& proxies,
                                const Dataset& references, Index b, double theta,
                                double tau) {
  auto refs = embed_dataset(encoder, references);
  IdentificationIndex index;
  index.proxies = proxies.proxies;
  index.references = Mat(static_cast<Index>(refs.size()),
                         encoder.config().embed_dim);
  index.reference_labels = Eigen::MatrixXi(static_cast<Index>(refs.size()),
                                           references.num_classes());
  for (size_t i = 0; i < refs.size(); ++i) {
    index.references.row(static_cast<Index>(i)) = refs[i].embedding.transpose();
    index.reference_labels.row(static_cast<Index>(i)) =
        refs[i].labels.transpose();
  }
  index.neighbors = std::min<Index>(
      b, std::min(index.num_classes(), index.num_references()));
  index.score_weight = theta;
  index.threshold = tau;
  return index;
}

struct TrainFlags {
  std::string train_path, val_path, out_dir;
  Index input_dim = 10000;
  Index embed_dim = 512;
  double margin = 0.1;
  double beta = 4.5;
  double exchange_ratio = 0.05;
  Index b = 40;
  double theta = 2.0;
  double tau = 0.3;
  Index epochs = 30;
  Index batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  Index n_merged = 0;
  Index n_exchanged = 0;
  std::string loss_mode = "combined";
  bool tiny = false;
};

LossMode parse_loss_mode(const std::string& s) {
  if (s == "combined") return LossMode::combined;
  if (s == "proxy-only") return LossMode::proxy_only;
  if (s == "sample-only") return LossMode::sample_only;
  throw DataError("unknown loss mode: " + s);
}

json train_config_echo(const TrainFlags& f) {
  json j;
  j["input_dim"] = f.input_dim;
  j["embed_dim"] = f.embed_dim;
  j["margin"] = f.margin;
  j["beta"] = f.beta;
  j["exchange_ratio"] = f.exchange_ratio;
  j["b"] = f.b;
  j["theta"] = f.theta;
  j["tau"] = f.tau;
  j["epochs"] = f.epochs;
  j["batch_size"] = f.batch_size;
  j["learning_rate"] = f.learning_rate;
  j["seed"] = f.seed;
  j["n_merged"] = f.n_merged;
  j["n_exchanged"] = f.n_exchanged;
  j["loss_mode"] = f.loss_mode;
  j["tiny"] = f.tiny;
  return j;
}

int run_train(const TrainFlags& f) {
  Dataset train_ds = load_dataset(f.train_path, DatasetFormat::ndjson);
  Dataset val_ds = load_dataset(f.val_path, DatasetFormat::ndjson);

  if (f.n_merged > 0 || f.n_exchanged > 0) {
    AugmentationConfig aug;
    aug.exchange_ratio = f.exchange_ratio;
    aug.rng_seed = f.seed;
    train_ds = augment_dataset(train_ds, aug, f.n_merged, f.n_exchanged);
  }

  EncoderConfig enc_cfg = f.tiny ? EncoderConfig::tiny() : EncoderConfig{};
  if (!f.tiny) {
    enc_cfg.input_dim = f.input_dim;
    enc_cfg.embed_dim = f.embed_dim;
  }
  LossConfig loss_cfg{f.margin, f.beta};
  TrainConfig train_cfg;
  train_cfg.epochs = f.epochs;
  train_cfg.batch_size = f.batch_size;
  train_cfg.learning_rate = f.learning_rate;
  train_cfg.seed = f.seed;
  train_cfg.loss_mode = parse_loss_mode(f.loss_mode);
  train_cfg.val_neighbors = f.b;
  train_cfg.val_score_weight = f.theta;

  TrainResult result = train(train_ds, val_ds, enc_cfg, loss_cfg, train_cfg);

  const fs::path run_dir = run_root() / f.out_dir;
  save_run(run_dir, result, train_config_echo(f).dump(2));
  IdentificationIndex index =
      build_index(result.encoder, result.proxies, train_ds, f.b, f.theta, f.tau);
  save_index(index, run_dir / "index.bin", train_config_echo(f).dump(2));
  std::cout << "trained " << result.log.size() << " epoch(s), best epoch "
            << result.best_epoch << ", artifacts in " << run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Oscar multi-tab webpage fingerprinting toolkit"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate synthetic traffic traces");
  SynthConfig synth_cfg;
  std::string synth_out;
  bool synth_single_only = false;
  synth->add_option("--classes", synth_cfg.n_classes, "Number of classes")
      ->capture_default_str();
  synth->add_option("--per-class", synth_cfg.traces_per_class,
                    "Single-tab traces per class")->capture_default_str();
  synth->add_option("--max-tabs", synth_cfg.max_tabs, "Max tabs per session (1-5)")
      ->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise_rate, "Burst noise rate")
      ->capture_default_str();
  synth->add_option("--signature-length", synth_cfg.signature_length,
                    "Bursts per class signature")->capture_default_str();
  synth->add_option("--burst-scale", synth_cfg.burst_scale,
                    "Max packets per burst")->capture_default_str();
  synth->add_option("--sessions", synth_cfg.n_sessions,
                    "Multi-tab session count (0 = classes*per-class)")
      ->capture_default_str();
  synth->add_option("--gap-min", synth_cfg.gap_range.first,
                    "Min gap between tabs (s)")->capture_default_str();
  synth->add_option("--gap-max", synth_cfg.gap_range.second,
                    "Max gap between tabs (s)")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "RNG seed")->capture_default_str();
  synth->add_flag("--single-only", synth_single_only,
                  "Emit single-tab traces without session mixing");
  synth->add_option("--out", synth_out, "Output dataset directory")->required();

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "Load, validate and re-save a dataset");
  std::string ingest_in, ingest_out, ingest_format = "ndjson";
  Index min_packets = kDefaultMinPackets;
  ingest->add_option("--in", ingest_in, "Input dataset directory")->required();
  ingest->add_option("--format", ingest_format, "Input format: ndjson|csv-dir")
      ->capture_default_str();
  ingest->add_option("--min-packets", min_packets,
                     "Drop traces with fewer packets")->capture_default_str();
  ingest->add_option("--out", ingest_out, "Output dataset directory")->required();

  // ---- augment ----
  auto* augment = app.add_subcommand("augment", "Augment a dataset");
  std::string aug_in, aug_out;
  AugmentationConfig aug_cfg;
  Index n_merged = 0, n_exchanged = 0;
  augment->add_option("--in", aug_in, "Input dataset directory")->required();
  augment->add_option("--out", aug_out, "Output dataset directory")->required();
  augment->add_option("--exchange-ratio", aug_cfg.exchange_ratio,
                      "Burst exchanging ratio m_e")->capture_default_str();
  augment->add_option("--n-merged", n_merged, "Merge-generated trace count")
      ->capture_default_str();
  augment->add_option("--n-exchanged", n_exchanged,
                      "Exchange-generated trace count")->capture_default_str();
  augment->add_option("--seed", aug_cfg.rng_seed, "RNG seed")->capture_default_str();

  // ---- train ----
  auto* train_cmd = app.add_subcommand(
      "train", "Train the feature transformation model and proxies");
  TrainFlags tf;
  train_cmd->add_option("--train", tf.train_path, "Training dataset directory")
      ->required();
  train_cmd->add_option("--val", tf.val_path, "Validation dataset directory")
      ->required();
  train_cmd->add_option("--out-dir", tf.out_dir, "Run directory name")->required();
  train_cmd->add_option("--input-dim", tf.input_dim, "Input dimension d_i")
      ->capture_default_str();
  train_cmd->add_option("--embed-dim", tf.embed_dim, "Transformed dimension d_o")
      ->capture_default_str();
  train_cmd->add_option("--margin", tf.margin, "Margin")->capture_default_str();
  train_cmd->add_option("--beta", tf.beta, "Loss weight beta")->capture_default_str();
  train_cmd->add_option("--exchange-ratio", tf.exchange_ratio,
                        "Exchanging ratio m_e")->capture_default_str();
  train_cmd->add_option("--b", tf.b, "Neighbor number b")->capture_default_str();
  train_cmd->add_option("--theta", tf.theta, "Score weight theta")
      ->capture_default_str();
  train_cmd->add_option("--tau", tf.tau, "Threshold tau")->capture_default_str();
  train_cmd->add_option("--epochs", tf.epochs, "Training epochs")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", tf.batch_size, "Batch size")
      ->capture_default_str();
  train_cmd->add_option("--learning-rate", tf.learning_rate, "Learning rate")
      ->capture_default_str();
  train_cmd->add_option("--seed", tf.seed, "RNG seed")->capture_default_str();
  train_cmd->add_option("--n-merged", tf.n_merged,
                        "Merge-augmented traces to add before training")
      ->capture_default_str();
  train_cmd->add_option("--n-exchanged", tf.n_exchanged,
                        "Exchange-augmented traces to add before training")
      ->capture_default_str();
  train_cmd->add_option("--loss-mode", tf.loss_mode,
                        "combined|proxy-only|sample-only")->capture_default_str();
  train_cmd->add_flag("--tiny", tf.tiny, "Use the desk-scale encoder preset");

  // ---- predict ----
  auto* predict = app.add_subcommand("predict", "Score traces against an index");
  std::string pred_index, pred_model, pred_data, pred_out;
  Index pred_b = 40;
  double pred_theta = 2.0, pred_tau = 0.3;
  predict->add_option("--index", pred_index, "Index snapshot file")->required();
  predict->add_option("--model", pred_model, "Encoder checkpoint")->required();
  predict->add_option("--data", pred_data, "Dataset directory to score")->required();
  predict->add_option("--b", pred_b, "Neighbor number b")->capture_default_str();
  predict->add_option("--theta", pred_theta, "Score weight theta")
      ->capture_default_str();
  predict->add_option("--tau", pred_tau, "Threshold tau")->capture_default_str();
  predict->add_option("--out", pred_out, "Predictions file (ndjson)")->required();

  // ---- evaluate ----
  auto* eval_cmd = app.add_subcommand("evaluate", "Compute Recall@k / AP@k");
  std::string eval_index, eval_model, eval_data, eval_out, eval_protocol = "closed";
  std::vector<Index> recall_ks = kDefaultRecallKs, ap_ks = kDefaultApKs;
  eval_cmd->add_option("--index", eval_index, "Index snapshot file")->required();
  eval_cmd->add_option("--model", eval_model, "Encoder checkpoint")->required();
  eval_cmd->add_option("--test", eval_data, "Test dataset directory")->required();
  eval_cmd->add_option("--recall-k", recall_ks, "Recall@k values")
      ->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--ap-k", ap_ks, "AP@k values")
      ->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--protocol", eval_protocol, "closed|open")
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Report file (json), optional");

  // ---- ablate ----
  auto* ablate = app.add_subcommand(
      "ablate", "Run the raw / proxy-only / sample-only / combined grid");
  std::string ab_train, ab_val, ab_test, ab_out;
  uint64_t ab_seed = 0;
  Index ab_epochs = 20;
  Index ab_n_merged = 0, ab_n_exchanged = 0;
  ablate->add_option("--train", ab_train, "Training dataset directory")->required();
  ablate->add_option("--val", ab_val, "Validation dataset directory")->required();
  ablate->add_option("--test", ab_test, "Test dataset directory")->required();
  ablate->add_option("--epochs", ab_epochs, "Epochs per setting")
      ->capture_default_str();
  ablate->add_option("--n-merged", ab_n_merged, "Merge-augmented traces")
      ->capture_default_str();
  ablate->add_option("--n-exchanged", ab_n_exchanged, "Exchange-augmented traces")
      ->capture_default_str();
  ablate->add_option("--seed", ab_seed, "RNG seed")->capture_default_str();
  ablate->add_option("--out", ab_out, "Report file (json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      Dataset singles = generate_single_tab(synth_cfg);
      Dataset out = synth_single_only ? singles
                                      : generate_multi_tab(synth_cfg, singles);
      save_dataset(out, synth_out);
      std::cout << "wrote " << out.size() << " traces to " << synth_out << "\n";
    } else if (*ingest) {
      Dataset ds = load_dataset(ingest_in, parse_format(ingest_format));
      ds = filter_short(ds, min_packets);
      save_dataset(ds, ingest_out);
      std::cout << "wrote " << ds.size() << " traces to " << ingest_out << "\n";
    } else if (*augment) {
      Dataset ds = load_dataset(aug_in, DatasetFormat::ndjson);
      Dataset out = augment_dataset(ds, aug_cfg, n_merged, n_exchanged);
      save_dataset(out, aug_out);
      std::cout << "wrote " << out.size() << " traces to " << aug_out << "\n";
    } else if (*train_cmd) {
      return run_train(tf);
    } else if (*predict) {
      Encoder encoder = Encoder::load(pred_model);
      IdentificationIndex index = load_index(pred_index);
      index.neighbors = std::min<Index>(
          pred_b, std::min(index.num_classes(), index.num_references()));
      index.score_weight = pred_theta;
      index.threshold = pred_tau;
      Dataset ds = load_dataset(pred_data, DatasetFormat::ndjson);
      auto embedded = embed_dataset(encoder, ds);
      std::ofstream out(pred_out);
      if (!out) throw std::runtime_error("cannot write " + pred_out);
      for (size_t i = 0; i < embedded.size(); ++i) {
        Decision d = combine_and_decide(embedded[i].embedding, index);
        json rec;
        rec["sample"] = i;
        json preds = json::array();
        for (Index j : d.predicted) preds.push_back(ds.class_catalog[j]);
        rec["predicted"] = preds;
        json top = json::array();
        for (size_t r = 0; r < std::min<size_t>(10, d.ranking.size()); ++r)
          top.push_back(ds.class_catalog[d.ranking[r]]);
        rec["top10"] = top;
        out << rec.dump() << "\n";
      }
      std::cout << "wrote predictions for " << embedded.size() << " samples to "
                << pred_out << "\n";
    } else if (*eval_cmd) {
      if (!fs::exists(eval_model))
        throw DataError("missing checkpoint: " + eval_model +
                        " (train a model first)");
      Encoder encoder = Encoder::load(eval_model);
      std::string echo;
      IdentificationIndex index = load_index(eval_index, &echo);
      Dataset ds = load_dataset(eval_data, DatasetFormat::ndjson);
      auto embedded = embed_dataset(encoder, ds);
      EvalReport report =
          evaluate(index, embedded, recall_ks, ap_ks,
                   eval_protocol == "open" ? Protocol::open : Protocol::closed);
      report.config_echo = echo;
      std::cout << report.to_text();
      if (!eval_out.empty()) {
        std::ofstream out(eval_out);
        out << report.to_json() << "\n";
      }
    } else if (*ablate) {
      Dataset train_ds = load_dataset(ab_train, DatasetFormat::ndjson);
      Dataset val_ds = load_dataset(ab_val, DatasetFormat::ndjson);
      Dataset test_ds = load_dataset(ab_test, DatasetFormat::ndjson);

      json report;
      {
        EvalReport raw = raw_feature_baseline(train_ds, test_ds, 40,
                                              EncoderConfig::tiny().input_dim);
        report["raw"] = json::parse(raw.to_json());
      }
      for (const std::string mode : {"proxy-only", "sample-only", "combined"}) {
        Dataset aug_train = train_ds;
        if (ab_n_merged > 0 || ab_n_exchanged > 0) {
          AugmentationConfig aug;
          aug.rng_seed = ab_seed;
          aug_train = augment_dataset(train_ds, aug, ab_n_merged, ab_n_exchanged);
        }
        TrainConfig tc;
        tc.epochs = ab_epochs;
        tc.seed = ab_seed;
        tc.loss_mode = parse_loss_mode(mode);
        TrainResult r = train(aug_train, val_ds, EncoderConfig::tiny(),
                              LossConfig{}, tc);
        IdentificationIndex index =
            build_index(r.encoder, r.proxies, aug_train, 40, 2.0, 0.3);
        auto embedded = embed_dataset(r.encoder, test_ds);
        EvalReport er = evaluate(index, embedded, kDefaultRecallKs, kDefaultApKs,
                                 Protocol::closed);
        report[mode] = json::parse(er.to_json());
        std::cout << mode << ": Recall@5 = " << er.recall_at.front().second
                  << "\n";
      }
      std::ofstream out(ab_out);
      out << report.dump(2) << "\n";
      std::cout << "wrote ablation report to " << ab_out << "\n";
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
