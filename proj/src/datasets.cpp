#include <cmath>
#include <numbers>

#include "natgrad/error.hpp"
#include "natgrad/experiments.hpp"
#include "natgrad/rng.hpp"

namespace natgrad {
namespace {

constexpr std::size_t kSide = 8;

void draw_stroke(Rng& rng, std::span<double> img) {
  const double amp = rng.uniform(0.8, 2.5);
  const double freq = rng.uniform(0.3, 1.2);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double centre = rng.uniform(2.5, 4.5);
  const double width = rng.uniform(0.5, 1.0);
  const double ink = rng.uniform(0.6, 1.0);
  for (std::size_t col = 0; col < kSide; ++col) {
    const double y = centre + amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(col) /
                                                 static_cast<double>(kSide) + phase);
    for (std::size_t row = 0; row < kSide; ++row) {
      const double d = static_cast<double>(row) - y;
      img[row * kSide + col] = ink * std::exp(-d * d / (2.0 * width * width));
    }
  }
}

DenseMatrix strokes(Rng& rng, std::size_t n) {
  DenseMatrix x(n, kSide * kSide);
  for (std::size_t i = 0; i < n; ++i) draw_stroke(rng, x.row(i));
  return x;
}

DenseMatrix cluster_means(std::uint64_t mixture_seed, std::size_t d, std::size_t k, double separation) {
  Rng rng = Rng::derive(mixture_seed, 0);
  DenseMatrix mu(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    double nrm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mu(c, j) = rng.normal();
      nrm += mu(c, j) * mu(c, j);
    }
    nrm = std::sqrt(nrm);
    for (std::size_t j = 0; j < d; ++j) mu(c, j) *= nrm > 0.0 ? separation / nrm : 0.0;
  }
  return mu;
}

Batch mixture_batch(const DenseMatrix& mu, Rng& rng, std::size_t n) {
  const std::size_t k = mu.rows(), d = mu.cols();
  DenseMatrix x(n, d), t(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.below(k);
    t(i, c) = 1.0;
    for (std::size_t j = 0; j < d; ++j) x(i, j) = mu(c, j) + rng.normal();
  }
  return {std::move(x), std::move(t)};
}

}  // namespace

DatasetBundle gen_autoencoder_task(std::uint64_t seed, std::size_t n, std::size_t n_valid,
                                   std::size_t n_test, std::size_t n_unlabeled) {
  if (n < 200) throw ConfigError("autoencoder task needs n >= 200");
  DatasetBundle b;
  b.seed = seed;
  Rng rng(seed);
  auto labeled = [&](std::size_t m) {
    DenseMatrix x = strokes(rng, m);
    DenseMatrix t = x;
    return Batch{std::move(x), std::move(t)};
  };
  b.train = labeled(n);
  b.valid = labeled(n_valid);
  b.test = labeled(n_test);
  b.unlabeled = strokes(rng, n_unlabeled);
  return b;
}

Batch sample_classification(std::uint64_t mixture_seed, std::uint64_t draw_seed, std::size_t n,
                            std::size_t d, std::size_t k, double separation) {
  if (k < 2) throw ConfigError("classification task needs k >= 2");
  const DenseMatrix mu = cluster_means(mixture_seed, d, k, separation);
  Rng rng(draw_seed);
  return mixture_batch(mu, rng, n);
}

DatasetBundle gen_classification_task(std::uint64_t seed, const ClassificationSpec& s) {
  if (s.classes < 2) throw ConfigError("classification task needs k >= 2");
  const DenseMatrix mu = cluster_means(seed, s.dim, s.classes, s.separation);
  DatasetBundle b;
  b.seed = seed;
  Rng train_rng = Rng::derive(seed, 1), valid_rng = Rng::derive(seed, 2),
      test_rng = Rng::derive(seed, 3), pool_rng = Rng::derive(seed, 4);
  b.train = mixture_batch(mu, train_rng, s.n);
  b.valid = mixture_batch(mu, valid_rng, s.n_valid);
  b.test = mixture_batch(mu, test_rng, s.n_test);
  b.unlabeled = mixture_batch(mu, pool_rng, s.n_unlabeled).inputs;
  return b;
}

DatasetBundle gen_classification_task(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t k) {
  ClassificationSpec s;
  s.n = n;
  s.n_unlabeled = n;
  s.dim = d;
  s.classes = k;
  return gen_classification_task(seed, s);
}

DatasetBundle make_dataset(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.kind == DatasetKind::Autoencoder)
    return gen_autoencoder_task(d.seed, d.n, d.n_valid, d.n_test, d.n_unlabeled);
  ClassificationSpec s{d.n, d.n_valid, d.n_test, d.n_unlabeled, d.dim, d.classes, d.separation};
  return gen_classification_task(d.seed, s);
}

double accuracy(const Mlp& m, const Batch& batch) {
  if (!batch.has_targets()) throw DimensionError("accuracy needs targets");
  if (batch.size() == 0) return 0.0;
  const ForwardTrace tr = forward(m, batch.inputs);
  const DenseMatrix& y = tr.output();
  const DenseMatrix& t = *batch.targets;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    std::size_t ay = 0, at = 0;
    for (std::size_t j = 1; j < y.cols(); ++j) {
      if (y(i, j) > y(i, ay)) ay = j;
      if (t(i, j) > t(i, at)) at = j;
    }
    hits += ay == at;
  }
  return static_cast<double>(hits) / static_cast<double>(y.rows());
}

}  // namespace natgrad
