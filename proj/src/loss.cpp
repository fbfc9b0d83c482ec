#include "oscar/loss.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace oscar {

namespace {

constexpr double kNormEps = 1e-12;  // guards untrained near-zero embeddings

// Smooth guarded cosine similarity: norms are sqrt(|u|^2 + eps), keeping
// the gradient finite everywhere.
double guarded_cos_sim(const Vec& u, const Vec& v, double& nu, double& nv) {
  nu = std::sqrt(u.squaredNorm() + kNormEps);
  nv = std::sqrt(v.squaredNorm() + kNormEps);
  return u.dot(v) / (nu * nv);
}

// d cos_sim / d u for the guarded form above.
Vec cos_sim_grad_u(const Vec& u, const Vec& v, double s, double nu, double nv) {
  return v / (nu * nv) - (s / (nu * nu)) * u;
}

}  // namespace

ProxySet init_proxies(Index num_classes, Index dim, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ProxySet ps;
  ps.proxies = Mat(num_classes, dim);
  for (Index i = 0; i < num_classes; ++i) {
    Vec row(dim);
    for (Index j = 0; j < dim; ++j) row[j] = gauss(rng);
    ps.proxies.row(i) = row.normalized();
  }
  return ps;
}

double cosine_similarity(const Vec& u, const Vec& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0)
    throw std::invalid_argument("cosine_similarity: zero vector");
  return u.dot(v) / (nu * nv);
}

double cosine_distance(const Vec& u, const Vec& v) {
  return 1.0 - cosine_similarity(u, v);
}

std::vector<std::pair<Index, Index>> mine_irrelevant_pairs(
    const Eigen::MatrixXi& labels) {
  const Index n = labels.rows();
  std::vector<Index> multi;
  for (Index i = 0; i < n; ++i)
    if (labels.row(i).sum() > 1) multi.push_back(i);

  std::vector<std::pair<Index, Index>> pairs;
  for (size_t a = 0; a < multi.size(); ++a)
    for (size_t b = a + 1; b < multi.size(); ++b) {
      const Index i = multi[a], j = multi[b];
      if (labels.row(i).dot(labels.row(j)) == 0) pairs.emplace_back(i, j);
    }
  return pairs;
}

LossResult proxy_loss(const Mat& embeddings, const Eigen::MatrixXi& labels,
                      const ProxySet& proxies, const LossConfig& config,
                      bool with_grad) {
  const Index n = embeddings.rows();
  const Index w = proxies.num_classes();
  if (labels.rows() != n || labels.cols() != w ||
      embeddings.cols() != proxies.dim())
    throw std::invalid_argument("proxy_loss: shape mismatch");

  Index num_pos = 0;
  for (Index i = 0; i < n; ++i) num_pos += labels.row(i).sum();
  const Index num_neg = n * w - num_pos;
  if (num_pos == 0 || num_neg == 0)
    throw std::invalid_argument(
        "proxy_loss: batch needs at least one positive and one negative "
        "proxy-sample pair");

  LossResult res;
  if (with_grad) {
    res.grad_embeddings = Mat::Zero(n, embeddings.cols());
    res.grad_proxies = Mat::Zero(w, proxies.dim());
  }

  double pos_sum = 0.0, neg_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Vec x = embeddings.row(i);
    for (Index j = 0; j < w; ++j) {
      const Vec p = proxies.proxies.row(j);
      double nx, np;
      const double s = guarded_cos_sim(x, p, nx, np);
      double dloss_ds = 0.0;
      if (labels(i, j) == 1) {
        pos_sum += 1.0 - s;
        dloss_ds = -1.0 / static_cast<double>(num_pos);
      } else if (s - config.margin > 0.0) {
        neg_sum += s - config.margin;
        dloss_ds = 1.0 / static_cast<double>(num_neg);
      }
      if (with_grad && dloss_ds != 0.0) {
        res.grad_embeddings.row(i) +=
            dloss_ds * cos_sim_grad_u(x, p, s, nx, np).transpose();
        res.grad_proxies.row(j) +=
            dloss_ds * cos_sim_grad_u(p, x, s, np, nx).transpose();
      }
    }
  }
  res.proxy_loss = pos_sum / static_cast<double>(num_pos) +
                   neg_sum / static_cast<double>(num_neg);
  res.total = res.proxy_loss;
  return res;
}

LossResult sample_loss(const Mat& embeddings, const Eigen::MatrixXi& labels,
                       const LossConfig& config, bool with_grad) {
  LossResult res;
  if (with_grad) res.grad_embeddings = Mat::Zero(embeddings.rows(), embeddings.cols());

  const auto pairs = mine_irrelevant_pairs(labels);
  if (pairs.empty()) return res;

  double sum = 0.0;
  for (const auto& [i, j] : pairs) {
    const Vec xi = embeddings.row(i);
    const Vec xj = embeddings.row(j);
    double ni, nj;
    const double s = guarded_cos_sim(xi, xj, ni, nj);
    if (s - config.margin > 0.0) {
      sum += s - config.margin;
      if (with_grad) {
        const double scale = 1.0 / static_cast<double>(pairs.size());
        res.grad_embeddings.row(i) +=
            scale * cos_sim_grad_u(xi, xj, s, ni, nj).transpose();
        res.grad_embeddings.row(j) +=
            scale * cos_sim_grad_u(xj, xi, s, nj, ni).transpose();
      }
    }
  }
  res.sample_loss = sum / static_cast<double>(pairs.size());
  res.total = res.sample_loss;
  return res;
}

LossResult combined_loss(const Mat& embeddings, const Eigen::MatrixXi& labels,
                         const ProxySet& proxies, const LossConfig& config,
                         bool with_grad) {
  LossResult p = proxy_loss(embeddings, labels, proxies, config, with_grad);
  LossResult s = sample_loss(embeddings, labels, config, with_grad);

  LossResult res;
  res.proxy_loss = p.proxy_loss;
  res.sample_loss = s.sample_loss;
  res.total = p.proxy_loss + config.beta * s.sample_loss;
  if (with_grad) {
    res.grad_embeddings = p.grad_embeddings + config.beta * s.grad_embeddings;
    res.grad_proxies = std::move(p.grad_proxies);
  }
  return res;
}

}  // namespace oscar
