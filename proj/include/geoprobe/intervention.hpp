#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "geoprobe/backend.hpp"
#include "geoprobe/head.hpp"
#include "geoprobe/probes.hpp"
#include "geoprobe/stats.hpp"

namespace geoprobe::intervention {

using geodesy::GeoPoint;

enum class Mode { descent, ascent, random, targeted };

std::string_view mode_name(Mode mode) noexcept;
Mode parse_mode(std::string_view name);

struct InterventionConfig {
  Mode mode = Mode::descent;
  double step_size = 1.0;
  std::size_t iterations = 80;
  probes::LossKind loss = probes::LossKind::mse;
  std::optional<bool> propagate;  ///< unset: false for the country task, true for next-word
  std::map<std::string, GeoPoint> target_map;
  std::uint64_t seed = 0;
  std::size_t eval_stride = 8;
  bool backtracking = true;  ///< halve the step until it does not increase the probe loss
  std::size_t max_halvings = 60;

  void validate() const;  // throws ConfigError
};

struct StepInfo {
  Eigen::VectorXd h;
  double alpha = 0.0;  ///< step actually taken along the gradient
  double step_norm = 0.0;
};

/// One update of a single activation vector. `label` is the coordinate the probe loss
/// is measured against (callers resolve targeted substitutes beforehand). In random mode
/// the noise direction is drawn from (cfg.seed, stream) and scaled to `random_norm`, or
/// to |alpha * g| when no norm is given.
StepInfo perturb_step(const Eigen::VectorXd& h, const probes::Probe& probe, const GeoPoint& label,
                      const InterventionConfig& cfg, std::uint64_t stream = 0,
                      std::optional<double> random_norm = std::nullopt);

/// The coordinate descent aims at for a city: target_map entry in targeted mode, the
/// true label otherwise.
GeoPoint resolve_target(const InterventionConfig& cfg, const std::string& city_id, const GeoPoint& label);

struct Checkpoint {
  std::size_t iteration = 0;
  double probe_loss = 0.0;
  double accuracy = 0.0;
  double top5 = 0.0;
  double mean_logit_change = 0.0;
};

struct InterventionTrace {
  Mode mode = Mode::descent;
  probes::LossKind loss = probes::LossKind::mse;
  std::uint64_t seed = 0;
  bool propagate = false;
  std::vector<double> probe_loss;  ///< mean probe loss per iteration, iterations + 1 entries
  std::vector<Checkpoint> checkpoints;
  Eigen::VectorXd final_logit_change;  ///< per sample, true label

  const Checkpoint& baseline() const { return checkpoints.front(); }
  const Checkpoint& final() const { return checkpoints.back(); }
  double delta_accuracy() const { return final().accuracy - baseline().accuracy; }
  double delta_top5() const { return final().top5 - baseline().top5; }
};

/// Iterations at which downstream metrics are evaluated: 0, every stride, and the last.
std::vector<std::size_t> checkpoint_iterations(std::size_t iterations, std::size_t stride);

struct CountryTask {
  Eigen::MatrixXd activations;  ///< n x d at `layer`
  std::vector<GeoPoint> coords;
  std::vector<std::size_t> labels;
  std::vector<std::string> city_ids;
  std::vector<std::string> prompts;  ///< needed only when propagating through a backend
  int layer = 0;

  void validate() const;
};

struct NextWordTask {
  std::vector<std::string> prompts;
  std::vector<GeoPoint> coords;
  std::vector<std::string> labels;  ///< country names; their first token is the target
  std::vector<std::string> city_ids;
  int layer = 0;
};

/// Perturbs every row and scores the head at each checkpoint. With propagation the
/// backend resumes from `layer` and the head reads the last-layer states.
InterventionTrace run_country_intervention(const CountryTask& task, const probes::Probe& probe,
                                           const CountryHead& head, const InterventionConfig& cfg,
                                           backend::Backend* backend = nullptr,
                                           backend::ScratchSpace* scratch = nullptr);

/// Descends toward `substitute` for a single city; returns head logits after minus before.
Eigen::VectorXd run_targeted(const CountryTask& task, const probes::Probe& probe, const CountryHead& head,
                             const std::string& city_id, const GeoPoint& substitute, const InterventionConfig& cfg);

InterventionTrace run_nextword_intervention(backend::Backend& backend, backend::ScratchSpace& scratch,
                                            const NextWordTask& task, const probes::Probe& probe,
                                            const InterventionConfig& cfg);

struct SuiteSample {
  double delta_accuracy = 0.0;
  double delta_top5 = 0.0;
  double mean_logit_change = 0.0;
};

struct SuiteResult {
  std::vector<SuiteSample> samples;
  stats::ZTestResult accuracy;
  stats::ZTestResult top5;
  stats::ZTestResult logit;
};

/// Runs the experiment once per seed (base_seed, base_seed + 1, ...) and z-tests each
/// metric for a positive mean.
SuiteResult significance_suite(const std::function<SuiteSample(std::uint64_t)>& experiment,
                               std::size_t repeats = 100, std::uint64_t base_seed = 0);

std::string trace_to_csv(const InterventionTrace& trace);
std::string trace_summary_json(const InterventionTrace& trace);

}  // namespace geoprobe::intervention
