#include "network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace geoprobe::probes::detail {
namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

ProbeParams as_params(const Layers& layers) { return ProbeParams{layers}; }

}  // namespace

Eigen::MatrixXd forward(const Layers& layers, const Eigen::MatrixXd& x, ForwardCache* cache) {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (a.cols() != layers[l].weight.cols()) {
      throw ShapeError("layer " + std::to_string(l) + " expects " + std::to_string(layers[l].weight.cols()) +
                       " inputs, got " + std::to_string(a.cols()));
    }
    Eigen::MatrixXd z = a * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (cache) cache->inputs.push_back(a);
    if (l + 1 < layers.size()) {
      if (cache) cache->pre.push_back(z);
      a = z.cwiseMax(0.0);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

void backward(const Layers& layers, const ForwardCache& cache, const Eigen::MatrixXd& d_out, Layers* grads,
              Eigen::MatrixXd* d_input) {
  if (grads) grads->resize(layers.size());
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (grads) {
      (*grads)[l].weight = delta.transpose() * cache.inputs[l];
      (*grads)[l].bias = delta.colwise().sum().transpose();
    }
    if (l == 0 && !d_input) break;
    Eigen::MatrixXd upstream = delta * layers[l].weight;
    if (l > 0) {
      const Eigen::MatrixXd& z = cache.pre[l - 1];
      delta = upstream.array() * (z.array() > 0.0).cast<double>();
    } else {
      *d_input = std::move(upstream);
    }
  }
}

Layers init_layers(std::span<const Eigen::Index> sizes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Layers layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Eigen::Index in = sizes[l];
    const Eigen::Index out = sizes[l + 1];
    const bool hidden = l + 2 < sizes.size();
    const double scale = std::sqrt((hidden ? 2.0 : 1.0) / static_cast<double>(std::max<Eigen::Index>(in, 1)));
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = scale * normal(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    layers.push_back(std::move(layer));
  }
  return layers;
}

bool all_finite(const Layers& layers) {
  return std::all_of(layers.begin(), layers.end(),
                     [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

double mean_objective(const Layers& layers, const Eigen::MatrixXd& x, std::span<const std::size_t> rows,
                      const Objective& objective) {
  if (rows.empty()) return 0.0;
  const Eigen::MatrixXd out = forward(layers, gather_rows(x, rows));
  return objective(out, rows, nullptr) / static_cast<double>(rows.size());
}

HoldoutSplit split_holdout(std::span<const std::size_t> rows, double fraction, std::mt19937_64& rng) {
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::shuffle(order.begin(), order.end(), rng);
  auto holdout_count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size())));
  if (holdout_count >= order.size()) holdout_count = 0;
  HoldoutSplit split;
  split.holdout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_count));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(holdout_count), order.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

Layers embed_linear(const DenseLayer& linear, std::span<const Eigen::Index> sizes, std::uint64_t seed) {
  Layers layers = init_layers(sizes, seed);
  if (layers.size() == 1) {
    layers.front() = linear;
    return layers;
  }
  const Eigen::Index out = linear.weight.rows();
  // units 2j and 2j+1 carry relu(z_j) and relu(-z_j)
  auto& first = layers.front();
  for (Eigen::Index j = 0; j < out; ++j) {
    first.weight.row(2 * j) = linear.weight.row(j);
    first.weight.row(2 * j + 1) = -linear.weight.row(j);
    first.bias(2 * j) = linear.bias(j);
    first.bias(2 * j + 1) = -linear.bias(j);
  }
  for (std::size_t l = 1; l + 1 < layers.size(); ++l) {
    auto& hidden = layers[l];
    hidden.weight.topRows(2 * out).setZero();
    hidden.weight.topLeftCorner(2 * out, 2 * out).setIdentity();
    hidden.bias.head(2 * out).setZero();
  }
  auto& last = layers.back();
  last.weight.setZero();
  last.bias.setZero();
  for (Eigen::Index j = 0; j < out; ++j) {
    last.weight(j, 2 * j) = 1.0;
    last.weight(j, 2 * j + 1) = -1.0;
  }
  return layers;
}

SgdOutcome sgd_train(Layers layers, const Eigen::MatrixXd& x, std::span<const std::size_t> rows,
                     const Objective& objective, const TrainConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);

  auto [train, holdout] = split_holdout(rows, cfg.holdout_fraction, rng);
  const std::vector<std::size_t>& monitor = holdout.empty() ? train : holdout;

  SgdOutcome best{layers, mean_objective(layers, x, monitor, objective), 0};
  if (!std::isfinite(best.monitored_loss)) throw DivergedError("non-finite loss at initialization", {});

  std::size_t stale = 0;
  Layers grads;
  ForwardCache cache;
  Eigen::MatrixXd d_out;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double step = cfg.step_size / (1.0 + cfg.step_decay * static_cast<double>(epoch - 1));
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, train.size());
      const std::span<const std::size_t> batch(train.data() + start, stop - start);
      const Eigen::MatrixXd out = forward(layers, gather_rows(x, batch), &cache);
      const double loss = objective(out, batch, &d_out);
      if (!std::isfinite(loss) || !d_out.allFinite()) {
        throw DivergedError("non-finite training loss at epoch " + std::to_string(epoch), as_params(best.layers));
      }
      d_out /= static_cast<double>(batch.size());
      backward(layers, cache, d_out, &grads, nullptr);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].weight -= step * grads[l].weight;
        layers[l].bias -= step * grads[l].bias;
      }
    }
    if (!all_finite(layers)) {
      throw DivergedError("non-finite parameters at epoch " + std::to_string(epoch), as_params(best.layers));
    }
    const double monitored = mean_objective(layers, x, monitor, objective);
    if (!std::isfinite(monitored)) {
      throw DivergedError("non-finite monitored loss at epoch " + std::to_string(epoch), as_params(best.layers));
    }
    if (monitored < best.monitored_loss) {
      best.layers = layers;
      best.monitored_loss = monitored;
      best.epochs = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return best;
}

}  // namespace geoprobe::probes::detail
