#include "geoprobe/probes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>
#include <sodium.h>

#include "network.hpp"

namespace geoprobe::probes {
namespace {

using detail::Layers;

constexpr double kRidge = 1e-6;
constexpr double kMaxCondition = 1e12;
constexpr int kParamsVersion = 1;

std::vector<std::size_t> all_rows(Eigen::Index n) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

geodesy::GeoPoint target_point(const Eigen::MatrixXd& y, std::size_t row) {
  const auto r = static_cast<Eigen::Index>(row);
  return geodesy::canonicalize(y(r, 0), y(r, 1));
}

detail::Objective regression_objective(const Eigen::MatrixXd& y, LossKind loss) {
  return [&y, loss](const Eigen::MatrixXd& out, std::span<const std::size_t> rows, Eigen::MatrixXd* d_out) {
    if (d_out) d_out->resize(out.rows(), 2);
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const Eigen::Vector2d pred = out.row(r).transpose();
      const auto target = target_point(y, rows[i]);
      total += sample_loss(loss, pred, target);
      if (d_out) d_out->row(r) = sample_loss_gradient(loss, pred, target).transpose();
    }
    return total;
  };
}

detail::Objective softmax_objective(std::span<const std::size_t> labels) {
  return [labels](const Eigen::MatrixXd& out, std::span<const std::size_t> rows, Eigen::MatrixXd* d_out) {
    if (d_out) d_out->resize(out.rows(), out.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      const Eigen::VectorXd logits = out.row(r).transpose();
      const double top = logits.maxCoeff();
      const Eigen::VectorXd e = (logits.array() - top).exp().matrix();
      const double z = e.sum();
      const auto label = static_cast<Eigen::Index>(labels[rows[i]]);
      total += std::log(z) - (logits(label) - top);
      if (d_out) {
        d_out->row(r) = (e / z).transpose();
        (*d_out)(r, label) -= 1.0;
      }
    }
    return total;
  };
}

void check_regression_inputs(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y) {
  if (h.rows() == 0) throw EmptyInput("no samples");
  if (y.rows() != h.rows() || y.cols() != 2) {
    throw ShapeError("targets must be " + std::to_string(h.rows()) + " x 2, got " + std::to_string(y.rows()) +
                     " x " + std::to_string(y.cols()));
  }
}

std::vector<Eigen::Index> layer_sizes(const ProbeSpec& spec, Eigen::Index d) {
  std::vector<Eigen::Index> sizes{d};
  for (std::size_t l = 0; l < spec.depth; ++l) sizes.push_back(static_cast<Eigen::Index>(spec.width));
  sizes.push_back(2);
  return sizes;
}

Layers initial_probe_layers(const ProbeSpec& spec, Eigen::Index d, const Eigen::MatrixXd& y) {
  Layers layers = detail::init_layers(layer_sizes(spec, d), spec.seed);
  layers.back().bias = y.colwise().mean().transpose();
  return layers;
}

void check_params(const Probe& probe, Eigen::Index d) {
  if (probe.params.empty()) throw ProbeError("probe has no parameters");
  if (probe.params.input_dim() != d) {
    throw ShapeError("probe expects " + std::to_string(probe.params.input_dim()) + " inputs, got " +
                     std::to_string(d));
  }
  if (probe.params.layers.back().weight.rows() != 2) throw ShapeError("probe output must be 2-dimensional");
}

std::string encode_f32(const Eigen::MatrixXd& m) {
  // row-major order, little-endian
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c)));
      for (int b = 0; b < 4; ++b) raw.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(raw.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), raw.data(), raw.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

Eigen::MatrixXd decode_f32(const std::string& text, Eigen::Index rows, Eigen::Index cols) {
  std::vector<unsigned char> raw(text.size());
  std::size_t len = 0;
  if (sodium_base642bin(raw.data(), raw.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0) {
    throw FormatError("invalid base64 payload");
  }
  if (len != static_cast<std::size_t>(rows * cols) * 4) throw FormatError("payload size does not match shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c, k += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[k + b]) << (8 * b);
      m(r, c) = std::bit_cast<float>(bits);
    }
  if (!m.allFinite()) throw FormatError("non-finite parameter");
  return m;
}

nlohmann::json layers_to_json(const Layers& layers) {
  auto arr = nlohmann::json::array();
  for (const auto& l : layers) {
    arr.push_back({{"rows", l.weight.rows()},
                   {"cols", l.weight.cols()},
                   {"weight", encode_f32(l.weight)},
                   {"bias", encode_f32(l.bias.transpose())}});
  }
  return arr;
}

Layers layers_from_json(const nlohmann::json& arr) {
  Layers layers;
  for (const auto& j : arr) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    if (rows <= 0 || cols <= 0) throw FormatError("invalid layer shape");
    if (!layers.empty() && layers.back().weight.rows() != cols) throw FormatError("inconsistent layer shapes");
    DenseLayer l;
    l.weight = decode_f32(j.at("weight").get<std::string>(), rows, cols);
    l.bias = decode_f32(j.at("bias").get<std::string>(), 1, rows).transpose();
    layers.push_back(std::move(l));
  }
  return layers;
}

nlohmann::json parse_versioned(const std::string& text, const char* format) {
  if (sodium_init() < 0) throw IoError("libsodium initialization failed");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(format) + ": " + e.what());
  }
  if (j.value("format", "") != format) throw FormatError(std::string("expected ") + format);
  if (j.value("version", 0) != kParamsVersion) throw FormatError(std::string(format) + ": unsupported version");
  return j;
}

}  // namespace

std::string_view loss_name(LossKind loss) noexcept { return loss == LossKind::mse ? "mse" : "geodist"; }

LossKind parse_loss(std::string_view name) {
  if (name == "mse") return LossKind::mse;
  if (name == "geodist") return LossKind::geodist;
  throw ConfigError("unknown loss: " + std::string(name));
}

std::string_view kind_name(ProbeKind kind) noexcept { return kind == ProbeKind::linear ? "linear" : "ffnn"; }

ProbeKind parse_kind(std::string_view name) {
  if (name == "linear") return ProbeKind::linear;
  if (name == "ffnn") return ProbeKind::ffnn;
  throw ConfigError("unknown probe kind: " + std::string(name));
}

void ProbeSpec::validate() const {
  if (kind == ProbeKind::linear && depth != 0) throw ConfigError("linear probe must have depth 0");
  if (kind == ProbeKind::ffnn && (depth < 1 || width < 1)) throw ConfigError("ffnn probe needs depth >= 1 and width >= 1");
}

void TrainConfig::validate() const {
  if (!(step_size > 0.0) || batch_size == 0 || max_epochs == 0 || patience == 0) {
    throw ConfigError("train config values must be positive");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout fraction must be in [0, 1)");
  if (step_decay < 0.0) throw ConfigError("step decay must be non-negative");
}

Eigen::MatrixXd ProbeParams::kernel() const {
  if (layers.size() != 1) throw ProbeError("kernel() is only defined for linear probes");
  return layers.front().weight.transpose();
}

ProbeParams fit_linear_ols(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y, bool intercept) {
  if (h.rows() == 0) throw EmptyInput("fit_linear_ols: no samples");
  if (y.rows() != h.rows()) throw ShapeError("fit_linear_ols: row mismatch");
  const Eigen::Index d = h.cols();
  Eigen::MatrixXd x(h.rows(), d + (intercept ? 1 : 0));
  x.leftCols(d) = h;
  if (intercept) x.col(d).setOnes();

  Eigen::MatrixXd normal = x.transpose() * x;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxCondition) normal.diagonal().array() += kRidge;

  const Eigen::MatrixXd coef = normal.ldlt().solve(x.transpose() * y);
  ProbeParams params;
  DenseLayer layer;
  layer.weight = coef.topRows(d).transpose();
  layer.bias = intercept ? Eigen::VectorXd(coef.row(d).transpose()) : Eigen::VectorXd::Zero(y.cols());
  params.layers.push_back(std::move(layer));
  return params;
}

Eigen::Vector2d probe_predict(const Probe& probe, const Eigen::VectorXd& h) {
  check_params(probe, h.size());
  return detail::forward(probe.params.layers, h.transpose()).row(0).transpose();
}

Eigen::MatrixXd probe_predict(const Probe& probe, const Eigen::MatrixXd& h) {
  check_params(probe, h.cols());
  return detail::forward(probe.params.layers, h);
}

double sample_loss(LossKind loss, const Eigen::Vector2d& pred, const geodesy::GeoPoint& target) {
  if (loss == LossKind::mse) {
    const double a = pred(0) - target.lat;
    const double b = pred(1) - target.lng;
    return a * a + b * b;
  }
  if (!pred.allFinite()) return std::numeric_limits<double>::infinity();
  return geodesy::haversine_km(geodesy::canonicalize(pred(0), pred(1)), target);
}

Eigen::Vector2d sample_loss_gradient(LossKind loss, const Eigen::Vector2d& pred, const geodesy::GeoPoint& target) {
  if (loss == LossKind::mse) return {2.0 * (pred(0) - target.lat), 2.0 * (pred(1) - target.lng)};
  if (!pred.allFinite()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const auto g = geodesy::geodist_gradient(pred(0), pred(1), target);
  return {g.d_lat, g.d_lng};
}

double mean_loss(const Probe& probe, LossKind loss, const Eigen::MatrixXd& h, const Eigen::MatrixXd& y) {
  check_regression_inputs(h, y);
  check_params(probe, h.cols());
  const auto rows = all_rows(h.rows());
  return detail::mean_objective(probe.params.layers, h, rows, regression_objective(y, loss));
}

TrainResult train_probe(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y, const ProbeSpec& spec,
                        const TrainConfig& cfg, const ProbeParams* init) {
  spec.validate();
  cfg.validate();
  check_regression_inputs(h, y);

  const bool closed_form = cfg.solver == Solver::closed_form ||
                           (cfg.solver == Solver::automatic && spec.kind == ProbeKind::linear &&
                            spec.loss == LossKind::mse && init == nullptr);
  if (closed_form && (spec.kind != ProbeKind::linear || spec.loss != LossKind::mse)) {
    throw ConfigError("closed-form solver requires a linear probe with MSE loss");
  }

  TrainResult result;
  const auto rows = all_rows(h.rows());
  const auto objective = regression_objective(y, spec.loss);
  if (closed_form) {
    result.params = fit_linear_ols(h, y);
  } else {
    Layers layers;
    if (init) {
      layers = init->layers;
    } else if (cfg.warm_start && (spec.kind == ProbeKind::linear || spec.width >= 4)) {
      std::mt19937_64 rng(cfg.seed);
      const auto split = detail::split_holdout(rows, cfg.holdout_fraction, rng);
      const auto linear = fit_linear_ols(gather(h, split.train), gather(y, split.train));
      layers = detail::embed_linear(linear.layers.front(), layer_sizes(spec, h.cols()), spec.seed);
    } else {
      layers = initial_probe_layers(spec, h.cols(), y);
    }
    check_params(Probe{spec, ProbeParams{layers}}, h.cols());
    if (spec.kind == ProbeKind::linear && layers.size() != 1) throw ConfigError("linear probe needs one layer");
    if (spec.kind == ProbeKind::ffnn && layers.size() != spec.depth + 1) throw ConfigError("init depth mismatch");
    auto outcome = detail::sgd_train(std::move(layers), h, rows, objective, cfg);
    result.params.layers = std::move(outcome.layers);
    result.holdout_loss = outcome.monitored_loss;
    result.epochs = outcome.epochs;
  }
  result.train_loss = detail::mean_objective(result.params.layers, h, rows, objective);
  if (closed_form) result.holdout_loss = result.train_loss;
  return result;
}

Eigen::VectorXd probe_input_gradient(const Probe& probe, const Eigen::VectorXd& h, const geodesy::GeoPoint& target,
                                     LossKind loss) {
  check_params(probe, h.size());
  detail::ForwardCache cache;
  const Eigen::MatrixXd out = detail::forward(probe.params.layers, h.transpose(), &cache);
  const Eigen::Vector2d g = sample_loss_gradient(loss, out.row(0).transpose(), target);
  Eigen::MatrixXd d_input;
  detail::backward(probe.params.layers, cache, g.transpose(), nullptr, &d_input);
  return d_input.row(0).transpose();
}

CvResult cross_validate(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y, const ProbeSpec& spec,
                        const TrainConfig& cfg, const dataset::FoldAssignment& folds) {
  check_regression_inputs(h, y);
  if (folds.fold_of.size() != static_cast<std::size_t>(h.rows())) throw ShapeError("fold assignment length mismatch");
  CvResult result;
  result.predictions.resize(h.rows(), 2);
  for (std::size_t fold = 0; fold < folds.k; ++fold) {
    const auto train_rows = folds.complement(fold);
    const auto test_rows = folds.members(fold);
    if (test_rows.empty() || train_rows.empty()) throw TooFewSamples("empty fold " + std::to_string(fold));
    const Eigen::MatrixXd h_train = gather(h, train_rows);
    const Eigen::MatrixXd y_train = gather(y, train_rows);
    const Eigen::MatrixXd h_test = gather(h, test_rows);
    const Eigen::MatrixXd y_test = gather(y, test_rows);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + 7919 * (fold + 1);
    Probe probe{spec, {}};
    try {
      probe.params = train_probe(h_train, y_train, spec, fold_cfg).params;
    } catch (const DivergedError& e) {
      throw DivergedError("fold " + std::to_string(fold) + ": " + e.what(), e.last_finite());
    } catch (const Error& e) {
      throw Error(e.code(), "fold " + std::to_string(fold) + ": " + e.what());
    }
    const Eigen::MatrixXd pred = probe_predict(probe, h_test);
    for (std::size_t i = 0; i < test_rows.size(); ++i)
      result.predictions.row(static_cast<Eigen::Index>(test_rows[i])) = pred.row(static_cast<Eigen::Index>(i));
    result.fold_losses.push_back(mean_loss(probe, spec.loss, h_test, y_test));
  }
  result.mean_loss = std::accumulate(result.fold_losses.begin(), result.fold_losses.end(), 0.0) /
                     static_cast<double>(result.fold_losses.size());
  return result;
}

std::vector<std::pair<std::size_t, std::size_t>> default_grid() {
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  for (std::size_t depth : {1, 2, 3, 4})
    for (std::size_t width : {16, 32, 64, 128, 256, 512}) grid.emplace_back(depth, width);
  return grid;
}

GridResult grid_search(const Eigen::MatrixXd& h, const Eigen::MatrixXd& y,
                       std::span<const std::pair<std::size_t, std::size_t>> grid, LossKind loss,
                       const TrainConfig& cfg, const dataset::FoldAssignment& folds, std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("empty grid");
  std::vector<std::pair<std::size_t, std::size_t>> points(grid.begin(), grid.end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  GridResult result;
  for (const auto& [depth, width] : points) {
    const auto spec = ProbeSpec::ffnn(depth, width, loss, seed);
    const auto cv = cross_validate(h, y, spec, cfg, folds);
    result.rows.push_back({depth, width, cv.mean_loss, cv.fold_losses});
    // strict improvement keeps the earliest (smallest depth, then width) on ties
    if (result.rows.size() == 1 || cv.mean_loss < result.best_loss) {
      result.best = spec;
      result.best_loss = cv.mean_loss;
    }
  }
  return result;
}

// Classifier -----------------------------------------------------------------

ClassifierParams train_country_classifier(const Eigen::MatrixXd& h, std::span<const std::size_t> labels,
                                          std::vector<std::string> countries, const TrainConfig& cfg,
                                          const ClassifierSpec& spec) {
  cfg.validate();
  if (h.rows() == 0) throw EmptyInput("no samples");
  if (labels.size() != static_cast<std::size_t>(h.rows())) throw ShapeError("label count mismatch");
  const std::size_t c = countries.size();
  if (c < 2) throw ConfigError("classifier needs at least two classes");
  for (std::size_t label : labels)
    if (label >= c) throw LabelError("label " + std::to_string(label) + " outside [0, " + std::to_string(c) + ")");
  if (spec.hidden_layers > 0 && spec.width == 0) throw ConfigError("hidden layers need positive width");

  std::vector<Eigen::Index> sizes{h.cols()};
  for (std::size_t l = 0; l < spec.hidden_layers; ++l) sizes.push_back(static_cast<Eigen::Index>(spec.width));
  sizes.push_back(static_cast<Eigen::Index>(c));

  const auto rows = all_rows(h.rows());
  auto outcome = detail::sgd_train(detail::init_layers(sizes, spec.seed), h, rows, softmax_objective(labels), cfg);
  return ClassifierParams{std::move(outcome.layers), std::move(countries)};
}

Eigen::VectorXd classify(const ClassifierParams& params, const Eigen::VectorXd& h) {
  if (params.layers.empty()) throw ProbeError("classifier has no parameters");
  if (params.layers.front().weight.cols() != h.size()) throw ShapeError("classifier input dimension mismatch");
  return detail::forward(params.layers, h.transpose()).row(0).transpose();
}

double cross_entropy(const ClassifierParams& params, const Eigen::MatrixXd& h, std::span<const std::size_t> labels) {
  if (labels.size() != static_cast<std::size_t>(h.rows())) throw ShapeError("label count mismatch");
  const auto rows = all_rows(h.rows());
  return detail::mean_objective(params.layers, h, rows, softmax_objective(labels));
}

std::vector<DenseLayer> cross_entropy_gradient(const ClassifierParams& params, const Eigen::MatrixXd& h,
                                               std::span<const std::size_t> labels) {
  if (labels.size() != static_cast<std::size_t>(h.rows())) throw ShapeError("label count mismatch");
  const auto rows = all_rows(h.rows());
  detail::ForwardCache cache;
  const Eigen::MatrixXd out = detail::forward(params.layers, h, &cache);
  Eigen::MatrixXd d_out;
  softmax_objective(labels)(out, rows, &d_out);
  d_out /= static_cast<double>(h.rows());
  Layers grads;
  detail::backward(params.layers, cache, d_out, &grads, nullptr);
  return grads;
}

double classification_accuracy(const ClassifierParams& params, const Eigen::MatrixXd& h,
                               std::span<const std::size_t> labels) {
  if (labels.size() != static_cast<std::size_t>(h.rows())) throw ShapeError("label count mismatch");
  if (h.rows() == 0) return 0.0;
  const Eigen::MatrixXd out = detail::forward(params.layers, h);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Eigen::Index arg = 0;
    out.row(i).maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(out.rows());
}

// Serialization ----------------------------------------------------------------

std::string probe_to_json(const Probe& probe) {
  if (sodium_init() < 0) throw IoError("libsodium initialization failed");
  nlohmann::json j;
  j["format"] = "geoprobe.probe";
  j["version"] = kParamsVersion;
  j["spec"] = {{"kind", kind_name(probe.spec.kind)},
               {"depth", probe.spec.depth},
               {"width", probe.spec.width},
               {"loss", loss_name(probe.spec.loss)},
               {"seed", probe.spec.seed}};
  j["dtype"] = "f32";
  j["layers"] = layers_to_json(probe.params.layers);
  return j.dump(2) + "\n";
}

Probe probe_from_json(const std::string& text) {
  const auto j = parse_versioned(text, "geoprobe.probe");
  Probe probe;
  try {
    const auto& s = j.at("spec");
    probe.spec.kind = parse_kind(s.at("kind").get<std::string>());
    probe.spec.depth = s.at("depth").get<std::size_t>();
    probe.spec.width = s.at("width").get<std::size_t>();
    probe.spec.loss = parse_loss(s.at("loss").get<std::string>());
    probe.spec.seed = s.at("seed").get<std::uint64_t>();
    probe.params.layers = layers_from_json(j.at("layers"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("probe JSON: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("probe JSON: ") + e.what());
  }
  if (probe.params.layers.size() != probe.spec.depth + 1) throw FormatError("probe depth does not match layers");
  if (probe.params.layers.back().weight.rows() != 2) throw FormatError("probe output must be 2-dimensional");
  return probe;
}

std::string classifier_to_json(const ClassifierParams& params) {
  if (sodium_init() < 0) throw IoError("libsodium initialization failed");
  nlohmann::json j;
  j["format"] = "geoprobe.classifier";
  j["version"] = kParamsVersion;
  j["countries"] = params.countries;
  j["dtype"] = "f32";
  j["layers"] = layers_to_json(params.layers);
  return j.dump(2) + "\n";
}

ClassifierParams classifier_from_json(const std::string& text) {
  const auto j = parse_versioned(text, "geoprobe.classifier");
  ClassifierParams params;
  try {
    params.countries = j.at("countries").get<std::vector<std::string>>();
    params.layers = layers_from_json(j.at("layers"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("classifier JSON: ") + e.what());
  }
  if (params.layers.empty() || params.num_classes() != params.countries.size()) {
    throw FormatError("classifier output size does not match country list");
  }
  return params;
}

}  // namespace geoprobe::probes
