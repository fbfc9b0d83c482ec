#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oscar/encoder.hpp"

using namespace oscar;

namespace {

// Small config for gradient checking: two pools of 4 over 64 inputs.
EncoderConfig grad_check_config() {
  EncoderConfig cfg;
  cfg.input_dim = 64;
  cfg.embed_dim = 8;
  cfg.block_channels = {2, 3, 3, 4};
  cfg.kernel_size = 3;
  cfg.pool_size = 2;
  return cfg;
}

Mat random_inputs(std::mt19937_64& rng, Index batch, Index dim) {
  Mat m(batch, dim);
  for (Index i = 0; i < batch; ++i)
    for (Index j = 0; j < dim; ++j) m(i, j) = rng() % 2 == 0 ? 1.0 : -1.0;
  return m;
}

}  // namespace

TEST_CASE("encode satisfies the shape contract") {
  EncoderConfig cfg = EncoderConfig::tiny();
  Encoder enc(cfg, 1);
  Mat zeros = Mat::Zero(1, cfg.input_dim);
  Mat out = enc.encode(zeros);
  CHECK(out.rows() == 1);
  CHECK(out.cols() == cfg.embed_dim);
  CHECK(out.allFinite());
  CHECK_THROWS(enc.encode(Mat::Zero(1, cfg.input_dim + 1)));
}

TEST_CASE("default config maps d_i=10000 to d_o=512") {
  // construct-only check at full scale to keep the test fast
  Encoder enc(EncoderConfig{}, 0);
  auto manifest = enc.parameter_manifest();
  CHECK(manifest.back().name == "linear.bias");
  CHECK(manifest.back().rows == 512);
  const auto& linear = manifest[manifest.size() - 2];
  CHECK(linear.rows == 512);
}

TEST_CASE("identical inputs in one batch embed identically") {
  EncoderConfig cfg = grad_check_config();
  Encoder enc(cfg, 3);
  std::mt19937_64 rng(5);
  Mat one = random_inputs(rng, 1, cfg.input_dim);
  Mat batch(4, cfg.input_dim);
  for (int i = 0; i < 4; ++i) batch.row(i) = one.row(0);
  Mat out = enc.encode(batch);
  for (int i = 1; i < 4; ++i)
    CHECK((out.row(i) - out.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode is permutation-equivariant across the batch") {
  EncoderConfig cfg = grad_check_config();
  Encoder enc(cfg, 7);
  std::mt19937_64 rng(9);
  Mat batch = random_inputs(rng, 5, cfg.input_dim);
  Mat out = enc.encode(batch);
  std::vector<Index> perm = {4, 2, 0, 3, 1};
  Mat permuted(5, cfg.input_dim);
  for (int i = 0; i < 5; ++i) permuted.row(i) = batch.row(perm[i]);
  Mat out_p = enc.encode(permuted);
  for (int i = 0; i < 5; ++i)
    CHECK((out_p.row(i) - out.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter manifest enumerates conv kernels and is seed-stable") {
  EncoderConfig cfg = EncoderConfig::tiny();
  Encoder enc(cfg, 1);
  auto manifest = enc.parameter_manifest();
  int conv_kernels = 0;
  for (const ParamInfo& p : manifest)
    if (p.name.find("conv") != std::string::npos &&
        p.name.find(".weight") != std::string::npos)
      ++conv_kernels;
  CHECK(conv_kernels == 8);  // 2 per block x 4 blocks

  Encoder enc2(cfg, 1);
  auto manifest2 = enc2.parameter_manifest();
  REQUIRE(manifest.size() == manifest2.size());
  for (size_t i = 0; i < manifest.size(); ++i) {
    CHECK(manifest[i].name == manifest2[i].name);
    CHECK(manifest[i].rows == manifest2[i].rows);
    CHECK(manifest[i].cols == manifest2[i].cols);
  }
  CHECK(enc.params() == enc2.params());
}

TEST_CASE("weight gradients match central finite differences") {
  EncoderConfig cfg = grad_check_config();
  Encoder enc(cfg, 11);
  std::mt19937_64 rng(13);
  Mat inputs = random_inputs(rng, 3, cfg.input_dim);

  // scalar loss: weighted sum of embeddings
  Mat weights = Mat::Random(3, cfg.embed_dim);
  auto loss_at = [&](const Vec& params) {
    Encoder probe = enc;
    probe.set_params(params);
    ForwardCache cache;
    Mat out = probe.forward(inputs, /*training=*/true, &cache);
    return out.cwiseProduct(weights).sum();
  };

  ForwardCache cache;
  Mat out = enc.forward(inputs, /*training=*/true, &cache);
  Vec grad = enc.backward(cache, weights);

  const double h = 1e-5;
  std::mt19937_64 pick(17);
  int checked = 0;
  for (int probe = 0; probe < 200; ++probe) {
    const Index i = static_cast<Index>(pick() % enc.num_params());
    Vec p_hi = enc.params(), p_lo = enc.params();
    p_hi[i] += h;
    p_lo[i] -= h;
    const double numeric = (loss_at(p_hi) - loss_at(p_lo)) / (2.0 * h);
    const double denom = std::max({std::abs(grad[i]), std::abs(numeric), 1e-6});
    if (std::abs(numeric) < 1e-10 && std::abs(grad[i]) < 1e-10) continue;
    REQUIRE(std::abs(grad[i] - numeric) / denom < 1e-4);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("shifted burst pattern stays closer than noise") {
  // translating a pattern by one pool stride moves the embedding less than
  // replacing the pattern with random noise
  EncoderConfig cfg = grad_check_config();
  Encoder enc(cfg, 19);
  std::mt19937_64 rng(23);
  int shift_wins = 0;
  const int trials = 120;
  for (int t = 0; t < trials; ++t) {
    Mat base = Mat::Zero(1, cfg.input_dim);
    const Index pat_len = 24;
    const Index start = 4 + static_cast<Index>(rng() % 16);
    for (Index i = 0; i < pat_len; ++i)
      base(0, start + i) = (i / 4) % 2 == 0 ? 1.0 : -1.0;

    Mat shifted = Mat::Zero(1, cfg.input_dim);
    for (Index i = 0; i < pat_len; ++i)
      shifted(0, start + cfg.pool_size + i) = base(0, start + i);

    Mat noise = Mat::Zero(1, cfg.input_dim);
    for (Index i = 0; i < pat_len; ++i)
      noise(0, start + i) = rng() % 2 == 0 ? 1.0 : -1.0;

    const Vec e0 = enc.encode(base).row(0);
    const double d_shift = (enc.encode(shifted).row(0).transpose() - e0).norm();
    const double d_noise = (enc.encode(noise).row(0).transpose() - e0).norm();
    if (d_shift < d_noise) ++shift_wins;
  }
  CHECK(shift_wins > trials / 2);
}

TEST_CASE("checkpoint round-trip preserves behavior") {
  EncoderConfig cfg = grad_check_config();
  Encoder enc(cfg, 29);
  std::mt19937_64 rng(31);
  Mat inputs = random_inputs(rng, 2, cfg.input_dim);
  Mat before = enc.encode(inputs);

  auto path = std::filesystem::temp_directory_path() / "oscar_enc.ckpt";
  enc.save(path.string());
  Encoder back = Encoder::load(path.string());
  Mat after = back.encode(inputs);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.config_json() == enc.config_json());
}
