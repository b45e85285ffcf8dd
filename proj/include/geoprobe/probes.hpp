#pragma once

// Probes mapping activations to (lat, lng): closed-form OLS, SGD-trained linear and
// rectifier FFNN regressors under MSE or GeoDist loss, input gradients, k-fold
// cross-validation, (depth, width) grid search, and a softmax country classifier.
//
// Targets stay in raw degrees. MSE is the squared Euclidean error in deg^2 summed over
// both coordinates; GeoDist is the haversine distance in km after canonicalizing the
// prediction. Reported losses are means per sample.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "geoprobe/dataset.hpp"
#include "geoprobe/error.hpp"
#include "geoprobe/geodesy.hpp"

namespace geoprobe::probes {

enum class ProbeKind { linear, ffnn };
enum class LossKind { mse, geodist };
enum class Solver { automatic, sgd, closed_form };

std::string_view loss_name(LossKind loss) noexcept;
LossKind parse_loss(std::string_view name);
std::string_view kind_name(ProbeKind kind) noexcept;
ProbeKind parse_kind(std::string_view name);

struct ProbeSpec {
  ProbeKind kind = ProbeKind::linear;
  std::size_t depth = 0;  ///< hidden layers
  std::size_t width = 0;  ///< neurons per hidden layer
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  static ProbeSpec linear(LossKind loss, std::uint64_t seed = 0) { return {ProbeKind::linear, 0, 0, loss, seed}; }
  static ProbeSpec ffnn(std::size_t depth, std::size_t width, LossKind loss, std::uint64_t seed = 0) {
    return {ProbeKind::ffnn, depth, width, loss, seed};
  }
};

/// y = W x + b, weight is out x in.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

struct ProbeParams {
  std::vector<DenseLayer> layers;

  bool empty() const { return layers.empty(); }
  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  /// d x 2 kernel T of a linear probe (throws ProbeError for multi-layer params).
  Eigen::MatrixXd kernel() const;
};

struct Probe {
  ProbeSpec spec;
  ProbeParams params;
};

struct TrainConfig {
  double step_size = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;  ///< epochs without holdout improvement before stopping
  double holdout_fraction = 0.1;
  double step_decay = 0.0;  ///< step at epoch e is step_size / (1 + step_decay * e)
  Solver solver = Solver::automatic;
  /// SGD starts from the least-squares linear fit of the training partition, embedded
  /// exactly into the network (width >= 4); otherwise from a random initialization.
  bool warm_start = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  ProbeParams params;
  double train_loss = 0.0;    ///< mean loss over all rows passed to training
  double holdout_loss = 0.0;  ///< best monitored loss
  std::size_t epochs = 0;
};

class DivergedError : public Error {
 public:
  DivergedError(const std::string& message, ProbeParams last_finite)
      : Error(ErrorCode::diverged, message), last_finite_(std::move(last_finite)) {}
  const ProbeParams& last_finite() const noexcept { return last_finite_; }

 private:
  ProbeParams last_finite_;
};

/// T = (H^T H)^-1 H^T Y on bias-augmented H; falls back to (H^T H + 1e-6 I) when the
/// normal matrix has condition number above 1e12.
ProbeParams fit_linear_ols(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y, bool intercept = true);

/// Raw (lat, lng), not canonicalized.
Eigen::Vector2d probe_predict(const Probe& probe, const Eigen::VectorXd& h);
Eigen::MatrixXd probe_predict(const Probe& probe, const Eigen::MatrixXd& h);

double sample_loss(LossKind loss, const Eigen::Vector2d& pred, const geodesy::GeoPoint& target);
Eigen::Vector2d sample_loss_gradient(LossKind loss, const Eigen::Vector2d& pred, const geodesy::GeoPoint& target);

/// Mean per-sample loss of a probe over rows of h.
double mean_loss(const Probe& probe, LossKind loss, const Eigen::MatrixXd& h, const Eigen::MatrixXd& y);

/// Mini-batch SGD (or closed form, see TrainConfig::solver). Deterministic given seeds.
/// When init is null the start point follows TrainConfig::warm_start; the random start
/// uses fan-in scaled Gaussians with the output bias at the mean target.
TrainResult train_probe(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y, const ProbeSpec& spec,
                        const TrainConfig& cfg, const ProbeParams* init = nullptr);

/// dL/dh for one activation vector by exact backpropagation.
Eigen::VectorXd probe_input_gradient(const Probe& probe, const Eigen::VectorXd& h,
                                     const geodesy::GeoPoint& target, LossKind loss);

struct CvResult {
  double mean_loss = 0.0;
  std::vector<double> fold_losses;
  Eigen::MatrixXd predictions;  ///< out-of-fold raw predictions, n x 2
};

CvResult cross_validate(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y, const ProbeSpec& spec,
                        const TrainConfig& cfg, const dataset::FoldAssignment& folds);

struct GridRow {
  std::size_t depth = 0;
  std::size_t width = 0;
  double mean_loss = 0.0;
  std::vector<double> fold_losses;
};

struct GridResult {
  std::vector<GridRow> rows;  ///< sorted by (depth, width)
  ProbeSpec best;
  double best_loss = 0.0;
};

/// Full factorial evaluation of ffnn (depth, width) pairs; ties go to smaller depth, then width.
GridResult grid_search(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y,
                       std::span<const std::pair<std::size_t, std::size_t>> grid, LossKind loss,
                       const TrainConfig& cfg, const dataset::FoldAssignment& folds, std::uint64_t seed = 0);

std::vector<std::pair<std::size_t, std::size_t>> default_grid();

// Country classifier -------------------------------------------------------

struct ClassifierSpec {
  std::size_t hidden_layers = 0;  ///< 0 = linear softmax
  std::size_t width = 0;
  std::uint64_t seed = 0;
};

struct ClassifierParams {
  std::vector<DenseLayer> layers;
  std::vector<std::string> countries;  ///< class order

  std::size_t num_classes() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows()); }
};

/// Softmax cross-entropy via mini-batch SGD. Throws LabelError for labels outside [0, C).
ClassifierParams train_country_classifier(const Eigen::MatrixXd& h, std::span<const std::size_t> labels,
                                          std::vector<std::string> countries, const TrainConfig& cfg,
                                          const ClassifierSpec& spec = {});

/// Pre-softmax logits.
Eigen::VectorXd classify(const ClassifierParams& params, const Eigen::VectorXd& h);

double cross_entropy(const ClassifierParams& params, const Eigen::MatrixXd& h, std::span<const std::size_t> labels);
/// Gradient of mean cross-entropy with respect to every layer's weight and bias.
std::vector<DenseLayer> cross_entropy_gradient(const ClassifierParams& params, const Eigen::MatrixXd& h,
                                               std::span<const std::size_t> labels);
double classification_accuracy(const ClassifierParams& params, const Eigen::MatrixXd& h,
                               std::span<const std::size_t> labels);

// Serialization: versioned JSON, shapes plus base64 little-endian f32 payloads.

std::string probe_to_json(const Probe& probe);
Probe probe_from_json(const std::string& text);
std::string classifier_to_json(const ClassifierParams& params);
ClassifierParams classifier_from_json(const std::string& text);

}  // namespace geoprobe::probes
