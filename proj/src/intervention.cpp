#include "geoprobe/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "geoprobe/error.hpp"

namespace geoprobe::intervention {

std::string_view mode_name(Mode mode) noexcept {
  switch (mode) {
    case Mode::descent: return "descent";
    case Mode::ascent: return "ascent";
    case Mode::random: return "random";
    case Mode::targeted: return "targeted";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "descent") return Mode::descent;
  if (name == "ascent") return Mode::ascent;
  if (name == "random") return Mode::random;
  if (name == "targeted") return Mode::targeted;
  throw ConfigError("unknown intervention mode: " + std::string(name));
}

void InterventionConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ConfigError("step size must be finite and non-negative");
  if (eval_stride < 1) throw ConfigError("eval stride must be at least 1");
  if (mode == Mode::targeted && target_map.empty()) throw ConfigError("targeted mode needs a target map");
}

GeoPoint resolve_target(const InterventionConfig& cfg, const std::string& city_id, const GeoPoint& label) {
  if (cfg.mode != Mode::targeted) return label;
  auto it = cfg.target_map.find(city_id);
  return it == cfg.target_map.end() ? label : it->second;
}

namespace {

double probe_loss_at(const probes::Probe& probe, const Eigen::VectorXd& h, const GeoPoint& label,
                     probes::LossKind loss) {
  return probes::sample_loss(loss, probes::probe_predict(probe, h), label);
}

Eigen::VectorXd random_unit(Eigen::Index d, std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
  const double norm = z.norm();
  return norm > 0.0 ? Eigen::VectorXd(z / norm) : z;
}

// Rank of the true class: number of classes scoring strictly higher.
std::size_t rank_of(const Eigen::VectorXd& logits, Eigen::Index label) {
  const double v = logits(label);
  return static_cast<std::size_t>((logits.array() > v).count());
}

struct Scores {
  double accuracy = 0.0;
  double top5 = 0.0;
  Eigen::VectorXd true_logit;
};

Scores score(const std::vector<Eigen::VectorXd>& logits, const std::vector<Eigen::Index>& labels) {
  Scores s;
  s.true_logit.resize(static_cast<Eigen::Index>(logits.size()));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const std::size_t rank = rank_of(logits[i], labels[i]);
    s.accuracy += rank == 0 ? 1.0 : 0.0;
    s.top5 += rank < 5 ? 1.0 : 0.0;
    s.true_logit(static_cast<Eigen::Index>(i)) = logits[i](labels[i]);
  }
  s.accuracy /= static_cast<double>(logits.size());
  s.top5 /= static_cast<double>(logits.size());
  return s;
}

void require_probe(const probes::Probe& probe, Eigen::Index d) {
  if (probe.params.empty()) throw ProbeError("intervention needs a trained probe");
  if (probe.params.input_dim() != d)
    throw ShapeError("probe expects " + std::to_string(probe.params.input_dim()) + " inputs, activations have " +
                     std::to_string(d));
}

// Drives the per-iteration update loop shared by the country and next-word runs.
InterventionTrace run_loop(Eigen::MatrixXd h, const std::vector<std::string>& city_ids,
                           const std::vector<GeoPoint>& coords, const probes::Probe& probe,
                           const InterventionConfig& cfg, bool propagate,
                           const std::function<std::vector<Eigen::VectorXd>(const Eigen::MatrixXd&)>& evaluate,
                           const std::vector<Eigen::Index>& labels) {
  const Eigen::Index n = h.rows();
  std::vector<GeoPoint> targets;
  targets.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    targets.push_back(resolve_target(cfg, city_ids[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(i)]));

  InterventionConfig descent_cfg = cfg;
  descent_cfg.mode = Mode::descent;
  Eigen::MatrixXd reference = cfg.mode == Mode::random ? h : Eigen::MatrixXd();

  InterventionTrace trace;
  trace.mode = cfg.mode;
  trace.loss = cfg.loss;
  trace.seed = cfg.seed;
  trace.propagate = propagate;

  auto mean_probe_loss = [&] {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      total += probe_loss_at(probe, h.row(i).transpose(), targets[static_cast<std::size_t>(i)], cfg.loss);
    return total / static_cast<double>(n);
  };

  const auto stops = checkpoint_iterations(cfg.iterations, cfg.eval_stride);
  std::size_t next_stop = 0;
  Eigen::VectorXd baseline_logit;
  auto checkpoint = [&](std::size_t iteration) {
    const Scores s = score(evaluate(h), labels);
    if (iteration == 0) baseline_logit = s.true_logit;
    trace.final_logit_change = s.true_logit - baseline_logit;
    trace.checkpoints.push_back(
        {iteration, trace.probe_loss.back(), s.accuracy, s.top5, trace.final_logit_change.mean()});
    ++next_stop;
  };

  trace.probe_loss.push_back(mean_probe_loss());
  checkpoint(0);
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& target = targets[static_cast<std::size_t>(i)];
      std::optional<double> norm;
      if (cfg.mode == Mode::random) {
        auto ref = perturb_step(reference.row(i).transpose(), probe, target, descent_cfg);
        reference.row(i) = ref.h.transpose();
        norm = ref.step_norm;
      }
      const std::uint64_t stream = static_cast<std::uint64_t>(i) * (cfg.iterations + 1) + t;
      h.row(i) = perturb_step(h.row(i).transpose(), probe, target, cfg, stream, norm).h.transpose();
    }
    trace.probe_loss.push_back(mean_probe_loss());
    if (next_stop < stops.size() && stops[next_stop] == t) checkpoint(t);
  }
  return trace;
}

}  // namespace

StepInfo perturb_step(const Eigen::VectorXd& h, const probes::Probe& probe, const GeoPoint& label,
                      const InterventionConfig& cfg, std::uint64_t stream, std::optional<double> random_norm) {
  require_probe(probe, h.size());
  const Eigen::VectorXd g = probes::probe_input_gradient(probe, h, label, cfg.loss);
  if (!g.allFinite()) throw ProbeError("probe gradient is not finite");

  double alpha = cfg.step_size;
  if (cfg.backtracking && alpha > 0.0 && g.squaredNorm() > 0.0) {
    const double current = probe_loss_at(probe, h, label, cfg.loss);
    std::size_t halvings = 0;
    while (!(probe_loss_at(probe, h - alpha * g, label, cfg.loss) <= current)) {
      if (++halvings > cfg.max_halvings) {
        alpha = 0.0;
        break;
      }
      alpha /= 2.0;
    }
  }

  StepInfo out;
  out.alpha = alpha;
  switch (cfg.mode) {
    case Mode::descent:
    case Mode::targeted: out.h = h - alpha * g; break;
    case Mode::ascent: out.h = h + alpha * g; break;
    case Mode::random: {
      const double norm = random_norm.value_or(alpha * g.norm());
      out.h = h + norm * random_unit(h.size(), cfg.seed, stream);
      break;
    }
  }
  out.step_norm = (out.h - h).norm();
  return out;
}

std::vector<std::size_t> checkpoint_iterations(std::size_t iterations, std::size_t stride) {
  if (stride == 0) throw ConfigError("eval stride must be at least 1");
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t <= iterations; t += stride) out.push_back(t);
  if (out.back() != iterations) out.push_back(iterations);
  return out;
}

void CountryTask::validate() const {
  const auto n = static_cast<std::size_t>(activations.rows());
  if (n == 0) throw EmptyInput("country task has no rows");
  if (coords.size() != n || labels.size() != n || city_ids.size() != n)
    throw ShapeError("country task rows, coordinates, labels and city ids must align");
  if (!prompts.empty() && prompts.size() != n) throw ShapeError("country task prompts must align with rows");
}

InterventionTrace run_country_intervention(const CountryTask& task, const probes::Probe& probe,
                                           const CountryHead& head, const InterventionConfig& cfg,
                                           backend::Backend* backend, backend::ScratchSpace* scratch) {
  cfg.validate();
  task.validate();
  require_probe(probe, task.activations.cols());
  const bool propagate = cfg.propagate.value_or(false);
  if (propagate && !backend) throw ConfigError("propagation needs a backend");
  if (propagate && task.prompts.empty()) throw ConfigError("propagation needs the city prompts");
  std::unique_ptr<backend::ScratchSpace> own_scratch;
  if (propagate && !scratch) {
    own_scratch = std::make_unique<backend::ScratchSpace>();
    scratch = own_scratch.get();
  }

  std::vector<Eigen::Index> labels;
  for (auto l : task.labels) {
    if (l >= head.num_classes()) throw LabelError("country label outside the head's classes");
    labels.push_back(static_cast<Eigen::Index>(l));
  }

  auto evaluate = [&](const Eigen::MatrixXd& h) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(h.rows()));
    if (!propagate) {
      for (Eigen::Index i = 0; i < h.rows(); ++i) out.push_back(head.logits(h.row(i).transpose()));
      return out;
    }
    activations::ActivationSet set;
    set.values = h.cast<float>();
    set.layer = task.layer;
    set.pooling = activations::Pooling::last_city_token;
    set.city_ids = task.city_ids;
    const auto ref = backend::write_tensor(*scratch, "perturbed", set);
    const auto result = backend->forward_from(task.layer, ref, backend::PositionMode::last_city_token, task.prompts);
    const Eigen::MatrixXd last = result.last_layer.load().as_double();
    std::error_code ec;
    for (const auto& p : {ref.path, result.last_layer.path, result.logits.path}) std::filesystem::remove(p, ec);
    for (Eigen::Index i = 0; i < last.rows(); ++i) out.push_back(head.logits(last.row(i).transpose()));
    return out;
  };

  return run_loop(task.activations, task.city_ids, task.coords, probe, cfg, propagate, evaluate, labels);
}

Eigen::VectorXd run_targeted(const CountryTask& task, const probes::Probe& probe, const CountryHead& head,
                             const std::string& city_id, const GeoPoint& substitute, const InterventionConfig& cfg) {
  task.validate();
  auto it = std::find(task.city_ids.begin(), task.city_ids.end(), city_id);
  if (it == task.city_ids.end()) throw LabelError("unknown city: " + city_id);
  InterventionConfig descent = cfg;
  descent.mode = Mode::descent;
  descent.validate();

  const Eigen::VectorXd start = task.activations.row(it - task.city_ids.begin()).transpose();
  Eigen::VectorXd h = start;
  for (std::size_t t = 0; t < descent.iterations; ++t) h = perturb_step(h, probe, substitute, descent).h;
  return head.logits(h) - head.logits(start);
}

InterventionTrace run_nextword_intervention(backend::Backend& backend, backend::ScratchSpace& scratch,
                                            const NextWordTask& task, const probes::Probe& probe,
                                            const InterventionConfig& cfg) {
  cfg.validate();
  const std::size_t n = task.prompts.size();
  if (n == 0) throw EmptyInput("next-word task has no prompts");
  if (task.coords.size() != n || task.labels.size() != n)
    throw ShapeError("next-word prompts, coordinates and labels must align");
  if (!cfg.propagate.value_or(true)) throw ConfigError("next-word interventions always resume the model");

  std::vector<std::string> city_ids = task.city_ids;
  if (city_ids.empty()) city_ids = task.prompts;
  if (city_ids.size() != n) throw ShapeError("next-word city ids must align with prompts");

  const auto clean = backend.next_token_logits(task.prompts, task.labels);
  std::vector<Eigen::Index> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const long id = clean.label_token_ids.size() == n ? clean.label_token_ids[i] : -1;
    if (id < 0) throw LabelError("label has no first token: " + task.labels[i]);
    labels.push_back(static_cast<Eigen::Index>(id));
  }
  std::error_code ec;
  std::filesystem::remove(clean.logits.path, ec);

  const int layers[] = {task.layer};
  const auto refs = backend.extract(task.prompts, layers, activations::Pooling::last_city_token);
  auto base = refs.at(task.layer).load();
  std::filesystem::remove(refs.at(task.layer).path, ec);
  require_probe(probe, base.d());

  auto evaluate = [&](const Eigen::MatrixXd& h) {
    activations::ActivationSet set = base;
    set.values = h.cast<float>();
    const auto ref = backend::write_tensor(scratch, "perturbed", set);
    const auto result = backend.forward_from(task.layer, ref, backend::PositionMode::last_city_token, task.prompts);
    const Eigen::MatrixXd logits = result.logits.load().as_double();
    for (const auto& p : {ref.path, result.last_layer.path, result.logits.path}) std::filesystem::remove(p, ec);
    std::vector<Eigen::VectorXd> out;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      if (labels[static_cast<std::size_t>(i)] >= logits.cols()) throw LabelError("label token outside the vocabulary");
      out.push_back(logits.row(i).transpose());
    }
    return out;
  };

  return run_loop(base.as_double(), city_ids, task.coords, probe, cfg, true, evaluate, labels);
}

SuiteResult significance_suite(const std::function<SuiteSample(std::uint64_t)>& experiment, std::size_t repeats,
                               std::uint64_t base_seed) {
  if (repeats < 2) throw TooFewSamples("significance suite needs at least 2 repeats");
  SuiteResult result;
  std::vector<double> acc, top5, logit;
  for (std::size_t r = 0; r < repeats; ++r) {
    const std::uint64_t seed = base_seed + r;
    try {
      result.samples.push_back(experiment(seed));
    } catch (const Error& e) {
      throw Error(e.code(), "seed " + std::to_string(seed) + " (repeat " + std::to_string(r) + "): " + e.what());
    }
    acc.push_back(result.samples.back().delta_accuracy);
    top5.push_back(result.samples.back().delta_top5);
    logit.push_back(result.samples.back().mean_logit_change);
  }
  result.accuracy = stats::z_test_mean_positive(acc);
  result.top5 = stats::z_test_mean_positive(top5);
  result.logit = stats::z_test_mean_positive(logit);
  return result;
}

std::string trace_to_csv(const InterventionTrace& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,probe_loss,accuracy,top5,mean_logit_change\n";
  for (const auto& c : trace.checkpoints)
    os << c.iteration << ',' << c.probe_loss << ',' << c.accuracy << ',' << c.top5 << ',' << c.mean_logit_change
       << '\n';
  return os.str();
}

std::string trace_summary_json(const InterventionTrace& trace) {
  using nlohmann::json;
  json z = nullptr;
  const auto& delta = trace.final_logit_change;
  if (delta.size() >= 2) {
    try {
      const auto r = stats::z_test_mean_positive(std::span<const double>(delta.data(), static_cast<std::size_t>(delta.size())));
      z = {{"mean", r.mean}, {"std", r.std}, {"n", r.n}, {"z", r.z}, {"p_one_sided", r.p_one_sided},
           {"p_two_sided", r.p_two_sided}};
    } catch (const DegenerateInput&) {
    }
  }
  json checkpoints = json::array();
  for (const auto& c : trace.checkpoints)
    checkpoints.push_back({{"iteration", c.iteration},
                           {"probe_loss", c.probe_loss},
                           {"accuracy", c.accuracy},
                           {"top5", c.top5},
                           {"mean_logit_change", c.mean_logit_change}});
  const json j = {{"format", "geoprobe.intervention"},
                  {"version", 1},
                  {"mode", mode_name(trace.mode)},
                  {"loss", probes::loss_name(trace.loss)},
                  {"seed", trace.seed},
                  {"propagate", trace.propagate},
                  {"iterations", trace.probe_loss.empty() ? 0 : trace.probe_loss.size() - 1},
                  {"baseline_accuracy", trace.baseline().accuracy},
                  {"final_accuracy", trace.final().accuracy},
                  {"delta_accuracy", trace.delta_accuracy()},
                  {"delta_top5", trace.delta_top5()},
                  {"mean_logit_change", trace.final().mean_logit_change},
                  {"logit_change_test", z},
                  {"probe_loss", trace.probe_loss},
                  {"checkpoints", checkpoints}};
  return j.dump(2);
}

}  // namespace geoprobe::intervention
