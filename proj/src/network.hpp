#pragma once

// Dense rectifier networks shared by the coordinate probes and the country classifier.
// Samples are rows: a layer maps an n x in batch to n x out.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "geoprobe/probes.hpp"

namespace geoprobe::probes::detail {

using Layers = std::vector<DenseLayer>;

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  ///< input to each layer
  std::vector<Eigen::MatrixXd> pre;     ///< pre-activation of each hidden layer
};

Eigen::MatrixXd forward(const Layers& layers, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr);

/// Backpropagates d_out (n x out). Either output may be null.
void backward(const Layers& layers, const ForwardCache& cache, const Eigen::MatrixXd& d_out, Layers* grads,
              Eigen::MatrixXd* d_input);

/// Fan-in scaled Gaussian weights (He for rectifier layers), zero biases.
Layers init_layers(std::span<const Eigen::Index> sizes, std::uint64_t seed);

bool all_finite(const Layers& layers);

/// Returns the summed loss over the selected rows and writes dL/d(output) for each
/// row into d_out (unscaled; the trainer divides by the batch size).
using Objective = std::function<double(const Eigen::MatrixXd& out, std::span<const std::size_t> rows,
                                       Eigen::MatrixXd* d_out)>;

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

/// Seeded shuffle of rows, first floor(fraction * n) go to the holdout. Both parts sorted.
HoldoutSplit split_holdout(std::span<const std::size_t> rows, double fraction, std::mt19937_64& rng);

/// Network of the given sizes computing exactly the affine map (weight, bias) on its
/// first four hidden units; remaining hidden units are random with zero outgoing weights.
Layers embed_linear(const DenseLayer& linear, std::span<const Eigen::Index> sizes, std::uint64_t seed);

struct SgdOutcome {
  Layers layers;
  double monitored_loss = 0.0;
  std::size_t epochs = 0;
};

/// Mini-batch SGD with seeded shuffling and early stopping on a seeded holdout split.
/// Keeps the parameters with the best monitored loss. Throws DivergedError.
SgdOutcome sgd_train(Layers layers, const Eigen::MatrixXd& x, std::span<const std::size_t> rows,
                     const Objective& objective, const TrainConfig& cfg);

/// Mean objective over the given rows.
double mean_objective(const Layers& layers, const Eigen::MatrixXd& x, std::span<const std::size_t> rows,
                      const Objective& objective);

}  // namespace geoprobe::probes::detail
