#include "geoprobe/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoprobe/activations.hpp"
#include "geoprobe/backend.hpp"
#include "geoprobe/dataset.hpp"
#include "geoprobe/error.hpp"
#include "geoprobe/intervention.hpp"
#include "geoprobe/manifest.hpp"
#include "geoprobe/probes.hpp"
#include "geoprobe/protocol.hpp"
#include "geoprobe/report.hpp"
#include "geoprobe/rsa.hpp"
#include "geoprobe/synthetic.hpp"

namespace geoprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

// Options ------------------------------------------------------------------

struct CatalogOptions {
  std::string catalog;
  std::size_t synthetic_countries = 30;
  std::size_t synthetic_cities = 40;
  std::uint64_t catalog_seed = 0;
};

struct WorldOptions {
  Eigen::Index d = 64;
  double noise_sigma = 0.01;
  double distractor_scale = 1.0;
  int layer_count = 12;
  std::uint64_t world_seed = 0;
  std::string backend = "synthetic";
  std::string backend_cmd;
};

void add_catalog_options(CLI::App* app, CatalogOptions& o, bool required) {
  auto* cat = app->add_option("--catalog", o.catalog, "catalog.json from ingest")->check(CLI::ExistingFile);
  if (required) {
    cat->required();
    return;
  }
  app->add_option("--synthetic-countries", o.synthetic_countries, "countries in the generated catalog")
      ->excludes(cat);
  app->add_option("--synthetic-cities", o.synthetic_cities, "cities per generated country")->excludes(cat);
  app->add_option("--catalog-seed", o.catalog_seed, "seed of the generated catalog")->excludes(cat);
}

void add_world_options(CLI::App* app, WorldOptions& o) {
  auto* backend = app->add_option("--backend", o.backend, "in-process backend")->check(CLI::IsMember({"synthetic"}));
  app->add_option("--backend-cmd", o.backend_cmd, "command line of a protocol backend server")->excludes(backend);
  app->add_option("--d", o.d, "synthetic hidden width")->check(CLI::PositiveNumber);
  app->add_option("--noise-sigma", o.noise_sigma, "synthetic per-city noise");
  app->add_option("--distractor-scale", o.distractor_scale, "synthetic distractor scale");
  app->add_option("--layer-count", o.layer_count, "synthetic layer count")->check(CLI::PositiveNumber);
  app->add_option("--world-seed", o.world_seed, "synthetic world seed");
}

dataset::CityCatalog load_catalog(const CatalogOptions& o) {
  if (!o.catalog.empty()) return dataset::read_catalog(o.catalog);
  return synthetic::make_synthetic_catalog(o.synthetic_countries, o.synthetic_cities, o.catalog_seed);
}

synthetic::SyntheticWorldConfig world_config(const WorldOptions& o) {
  synthetic::SyntheticWorldConfig cfg;
  cfg.d = o.d;
  cfg.noise_sigma = o.noise_sigma;
  cfg.distractor_scale = o.distractor_scale;
  cfg.layer_count = o.layer_count;
  cfg.seed = o.world_seed;
  return cfg;
}

struct BackendHandle {
  std::shared_ptr<backend::ScratchSpace> scratch;
  std::shared_ptr<const synthetic::SyntheticWorld> world;  ///< null for process backends
  std::unique_ptr<backend::Backend> backend;

  BackendHandle() = default;
  BackendHandle(BackendHandle&&) = default;
  BackendHandle& operator=(BackendHandle&&) = default;
  ~BackendHandle() {
    // The per-process default directory goes away once empty; a user-chosen one stays.
    if (scratch && !std::getenv("GEOPROBE_SCRATCH")) {
      std::error_code ec;
      fs::remove(scratch->dir(), ec);
    }
  }
};

BackendHandle open_backend(const WorldOptions& o, const dataset::CityCatalog& catalog) {
  BackendHandle h;
  h.scratch = std::make_shared<backend::ScratchSpace>();
  if (!o.backend_cmd.empty()) {
    auto argv = split_words(o.backend_cmd);
    if (argv.empty()) throw ConfigError("--backend-cmd is empty");
    h.backend = std::make_unique<protocol::ProcessBackend>(std::move(argv), h.scratch);
  } else {
    h.world = std::make_shared<const synthetic::SyntheticWorld>(catalog, world_config(o));
    h.backend = std::make_unique<synthetic::SyntheticBackend>(h.world, h.scratch);
  }
  return h;
}

/// Reads a backend tensor into memory and deletes the exchange file.
activations::ActivationSet take(const backend::TensorRef& ref) {
  auto set = ref.load();
  std::error_code ec;
  fs::remove(ref.path, ec);
  return set;
}

dataset::PromptTemplate parse_template(const std::string& name) {
  if (name == "coords") return dataset::PromptTemplate::coords;
  if (name == "country") return dataset::PromptTemplate::country;
  throw ConfigError("unknown prompt template: " + name);
}

probes::Solver parse_solver(const std::string& name) {
  if (name == "auto") return probes::Solver::automatic;
  if (name == "sgd") return probes::Solver::sgd;
  if (name == "closed_form") return probes::Solver::closed_form;
  throw ConfigError("unknown solver: " + name);
}

// Manifest plumbing --------------------------------------------------------

json snapshot(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else if (!opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

class Run {
 public:
  Run(std::string command, const CLI::App* app, const std::string& out_dir, int argc, const char* const* argv)
      : dir_(out_dir) {
    manifest::prepare_output_dir(dir_, command);
    m_.command = std::move(command);
    m_.argv.assign(argv, argv + argc);
    m_.config = snapshot(app);
    m_.started_at = manifest::utc_now();
  }

  const fs::path& dir() const { return dir_; }
  void input(const fs::path& path) { m_.inputs[path.string()] = manifest::hash_file(path); }
  void seed(const std::string& name, std::uint64_t value) { m_.seeds[name] = value; }
  void write(const std::string& name, const std::string& text) { manifest::write_text(dir_ / name, text); }
  void finish() { manifest::finalize(dir_, m_); }

 private:
  fs::path dir_;
  manifest::RunManifest m_;
};

// ingest -------------------------------------------------------------------

struct IngestOptions {
  std::string csv;
  std::size_t synthetic_countries = 0;
  std::size_t synthetic_cities = 0;
  std::size_t top_k = 100;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_ingest(const IngestOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  if (o.csv.empty() && (o.synthetic_countries == 0 || o.synthetic_cities == 0))
    throw ConfigError("ingest needs --csv or both --synthetic-countries and --synthetic-cities");
  Run run("ingest", app, o.out, argc, argv);
  run.seed("seed", o.seed);
  dataset::CityCatalog catalog;
  if (!o.csv.empty()) {
    run.input(o.csv);
    catalog = dataset::load_catalog(o.csv, o.top_k, o.seed);
  } else {
    catalog = synthetic::make_synthetic_catalog(o.synthetic_countries, o.synthetic_cities, o.seed);
  }
  run.write("catalog.json", dataset::catalog_to_json(catalog));
  run.finish();
}

// extract ------------------------------------------------------------------

struct ExtractOptions {
  CatalogOptions catalog;
  WorldOptions world;
  std::vector<int> layers;
  std::string pooling = "mean_nonpad";
  std::string tmpl = "coords";
  std::string out;
};

void cmd_extract(const ExtractOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  const auto pooling = activations::parse_pooling(o.pooling);
  const auto tmpl = parse_template(o.tmpl);
  Run run("extract", app, o.out, argc, argv);
  run.input(o.catalog.catalog);
  run.seed("world_seed", o.world.world_seed);
  const auto catalog = dataset::read_catalog(o.catalog.catalog);
  auto bh = open_backend(o.world, catalog);
  std::vector<int> layers = o.layers;
  if (layers.empty()) layers.push_back(bh.backend->info().layer_count);

  std::vector<std::string> prompts;
  for (const auto& city : catalog.cities) prompts.push_back(dataset::build_prompt(city, tmpl));
  const auto refs = bh.backend->extract(prompts, layers, pooling);
  for (const auto& [layer, ref] : refs) {
    auto set = take(ref);
    activations::write_activations(set, run.dir() / ("layer_" + std::to_string(layer) + ".gact"));
  }
  run.finish();
}

// probe --------------------------------------------------------------------

struct ProbeOptions {
  std::string activations;
  std::string targets;
  std::string kind = "linear";
  std::string loss = "mse";
  std::size_t folds = 10;
  std::size_t depth = 1;
  std::size_t width = 32;
  std::string grid;
  double step_size = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 500;
  std::size_t patience = 10;
  double holdout = 0.1;
  double step_decay = 0.0;
  std::string solver = "auto";
  bool no_warm_start = false;
  std::uint64_t seed = 0;
  std::string out;
};

std::vector<std::pair<std::size_t, std::size_t>> parse_grid(const std::string& text) {
  if (text == "default") return probes::default_grid();
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto x = item.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t used_d = 0, used_w = 0;
      const auto d = std::stoul(item.substr(0, x), &used_d);
      const auto w = std::stoul(item.substr(x + 1), &used_w);
      if (used_d != x || used_w != item.size() - x - 1) throw std::invalid_argument(item);
      grid.emplace_back(d, w);
    } catch (const std::exception&) {
      throw ConfigError("grid entries look like DEPTHxWIDTH, got '" + item + "'");
    }
  }
  if (grid.empty()) throw ConfigError("--grid is empty");
  return grid;
}

void cmd_probe(const ProbeOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  const auto loss = probes::parse_loss(o.loss);
  probes::TrainConfig train;
  train.step_size = o.step_size;
  train.batch_size = o.batch_size;
  train.max_epochs = o.epochs;
  train.patience = o.patience;
  train.holdout_fraction = o.holdout;
  train.step_decay = o.step_decay;
  train.solver = parse_solver(o.solver);
  train.warm_start = !o.no_warm_start;
  train.seed = o.seed;
  train.validate();

  std::optional<std::vector<std::pair<std::size_t, std::size_t>>> grid;
  if (!o.grid.empty()) {
    if (app->count("--kind") && o.kind != "ffnn") throw ConfigError("--grid searches ffnn probes only");
    grid = parse_grid(o.grid);
  }
  probes::ProbeSpec spec = probes::parse_kind(o.kind) == probes::ProbeKind::linear
                               ? probes::ProbeSpec::linear(loss, o.seed)
                               : probes::ProbeSpec::ffnn(o.depth, o.width, loss, o.seed);
  spec.validate();

  Run run("probe", app, o.out, argc, argv);
  run.input(o.activations);
  run.input(o.targets);
  run.seed("seed", o.seed);

  const auto set = activations::read_activations(o.activations);
  const auto catalog = dataset::read_catalog(o.targets);
  if (set.city_ids.size() != static_cast<std::size_t>(set.n()))
    throw ShapeError("activation file carries no city ids to align with the targets");
  Eigen::MatrixXd y(set.n(), 2);
  std::vector<const dataset::City*> cities;
  for (std::size_t i = 0; i < set.city_ids.size(); ++i) {
    const auto& city = catalog.city(set.city_ids[i]);
    cities.push_back(&city);
    y(static_cast<Eigen::Index>(i), 0) = city.location.lat;
    y(static_cast<Eigen::Index>(i), 1) = city.location.lng;
  }
  const Eigen::MatrixXd h = set.as_double();
  const auto folds = dataset::make_folds(static_cast<std::size_t>(h.rows()), o.folds, o.seed);

  if (grid) {
    const auto result = probes::grid_search(h, y, *grid, loss, train, folds, o.seed);
    std::ostringstream csv;
    csv << "depth,width,mean_loss,fold_losses\n";
    for (const auto& row : result.rows) {
      csv << row.depth << ',' << row.width << ',' << num(row.mean_loss) << ',';
      for (std::size_t f = 0; f < row.fold_losses.size(); ++f) csv << (f ? ";" : "") << num(row.fold_losses[f]);
      csv << '\n';
    }
    run.write("grid.csv", csv.str());
    spec = result.best;
  }

  const auto cv = probes::cross_validate(h, y, spec, train, folds);
  json report = {{"format", "geoprobe.cv"},
                 {"version", 1},
                 {"model_id", set.model_id},
                 {"layer", set.layer},
                 {"pooling", activations::pooling_name(set.pooling)},
                 {"kind", probes::kind_name(spec.kind)},
                 {"depth", spec.depth},
                 {"width", spec.width},
                 {"loss", probes::loss_name(loss)},
                 {"folds", o.folds},
                 {"seed", o.seed},
                 {"n", h.rows()},
                 {"d", h.cols()},
                 {"mean_loss", cv.mean_loss},
                 {"fold_losses", cv.fold_losses}};
  run.write("cv_report.json", report.dump(2) + "\n");

  std::ostringstream pred;
  pred << "city,country,true_lat,true_lng,pred_lat,pred_lng,layer\n";
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    const auto* city = cities[static_cast<std::size_t>(i)];
    const auto p = geodesy::canonicalize(cv.predictions(i, 0), cv.predictions(i, 1));
    pred << csv_field(city->display_name) << ',' << csv_field(city->country) << ',' << num(city->location.lat) << ','
         << num(city->location.lng) << ',' << num(p.lat) << ',' << num(p.lng) << ',' << set.layer << '\n';
  }
  run.write("predictions.csv", pred.str());

  const auto fit = probes::train_probe(h, y, spec, train);
  run.write("probe.json", probes::probe_to_json({spec, fit.params}));
  run.finish();
}

// rsa ----------------------------------------------------------------------

struct RsaOptions {
  std::string activations;
  std::string catalog;
  std::string metric = "all";
  std::string scaling = "zscore";
  std::string out;
};

void cmd_rsa(const RsaOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  std::vector<rsa::Metric> metrics;
  if (o.metric == "all") {
    metrics = {rsa::Metric::one_minus_spearman, rsa::Metric::cosine, rsa::Metric::scaled_euclidean};
  } else {
    metrics = {rsa::parse_metric(o.metric)};
    if (metrics.front() == rsa::Metric::geodesic) throw ConfigError("geodesic is the reference, not an activation metric");
  }
  rsa::Scaling scaling;
  if (o.scaling == "zscore") scaling = rsa::Scaling::zscore;
  else if (o.scaling == "sqrt_d") scaling = rsa::Scaling::sqrt_d;
  else throw ConfigError("unknown scaling: " + o.scaling);

  Run run("rsa", app, o.out, argc, argv);
  run.input(o.activations);
  run.input(o.catalog);
  const auto set = activations::read_activations(o.activations);
  const auto catalog = dataset::read_catalog(o.catalog);
  const auto geo = rsa::geo_distance_matrix(dataset::country_centroids(catalog));
  const auto vectors = rsa::country_activation_vectors(set, catalog);
  run.write("matrix_geodesic.csv", rsa::matrix_to_csv(geo));
  for (auto metric : metrics) {
    const auto act = rsa::activation_distance_matrix(vectors, catalog.countries, metric, scaling);
    auto report = rsa::rsa_alignment(geo, act);
    report.model_id = set.model_id;
    report.layer = set.layer;
    const std::string name(rsa::metric_name(metric));
    run.write("rsa_" + name + ".json", rsa::report_to_json(report) + "\n");
    run.write("matrix_" + name + ".csv", rsa::matrix_to_csv(act));
  }
  run.finish();
}

// intervene ----------------------------------------------------------------

struct InterveneOptions {
  CatalogOptions catalog;
  WorldOptions world;
  std::string mode = "descent";
  std::size_t iters = 80;
  double step_size = 1.0;
  std::string loss = "mse";
  bool propagate = false;
  bool no_propagate = false;
  std::size_t eval_stride = 8;
  std::uint64_t seed = 0;
  int layer = -1;
  std::string head = "synthetic";
  std::string classifier;
  double classifier_step = 0.05;
  std::size_t classifier_epochs = 2000;
  std::string probe;
  std::string pooling = "mean_nonpad";
  std::string tmpl = "coords";
  bool no_backtracking = false;
  std::string city;
  std::string substitute;
  std::string out;
};

void add_intervene_options(CLI::App* app, InterveneOptions& o, bool targeted) {
  add_catalog_options(app, o.catalog, false);
  add_world_options(app, o.world);
  if (!targeted) {
    app->add_option("--mode", o.mode, "descent, ascent or random")->check(CLI::IsMember({"descent", "ascent", "random"}));
    app->add_option("--eval-stride", o.eval_stride, "iterations between downstream evaluations");
    auto* on = app->add_flag("--propagate", o.propagate, "resume the model from the perturbed layer");
    app->add_flag("--no-propagate", o.no_propagate, "score the perturbed layer directly")->excludes(on);
  }
  app->add_option("--iters", o.iters, "perturbation iterations");
  app->add_option("--step-size", o.step_size, "step size alpha");
  app->add_option("--loss", o.loss, "probe loss: mse or geodist")->check(CLI::IsMember({"mse", "geodist"}));
  app->add_option("--seed", o.seed, "seed for probes, heads and random directions");
  app->add_option("--layer", o.layer, "layer to perturb (default: last)");
  app->add_option("--head", o.head, "country head: synthetic or classifier")
      ->check(CLI::IsMember({"synthetic", "classifier"}));
  app->add_option("--classifier", o.classifier, "trained classifier JSON")->check(CLI::ExistingFile);
  app->add_option("--classifier-step-size", o.classifier_step, "SGD step when training the classifier head");
  app->add_option("--classifier-epochs", o.classifier_epochs, "epochs when training the classifier head");
  app->add_option("--probe", o.probe, "trained probe JSON (default: fit a linear probe)")->check(CLI::ExistingFile);
  app->add_option("--pooling", o.pooling, "activation pooling");
  app->add_option("--template", o.tmpl, "prompt template: coords or country")
      ->check(CLI::IsMember({"coords", "country"}));
  app->add_flag("--no-backtracking", o.no_backtracking, "take raw steps without halving");
  if (targeted) {
    app->add_option("--city", o.city, "city to perturb")->required();
    app->add_option("--substitute", o.substitute, "city whose coordinates become the target")->required();
  }
  app->add_option("--out", o.out, "output directory")->required();
}

intervention::InterventionConfig intervention_config(const InterveneOptions& o) {
  intervention::InterventionConfig cfg;
  cfg.mode = intervention::parse_mode(o.mode);
  cfg.iterations = o.iters;
  cfg.step_size = o.step_size;
  cfg.loss = probes::parse_loss(o.loss);
  if (o.propagate) cfg.propagate = true;
  if (o.no_propagate) cfg.propagate = false;
  cfg.eval_stride = o.eval_stride;
  cfg.seed = o.seed;
  cfg.backtracking = !o.no_backtracking;
  cfg.validate();
  return cfg;
}

struct Prepared {
  dataset::CityCatalog catalog;
  BackendHandle bh;
  int layer = 0;
  std::vector<std::string> prompts;
  Eigen::MatrixXd h;
  std::vector<geodesy::GeoPoint> coords;
  std::vector<std::string> city_ids;
  probes::Probe probe;
};

Prepared prepare(const InterveneOptions& o, Run& run, dataset::PromptTemplate tmpl, activations::Pooling pooling) {
  Prepared p;
  if (!o.catalog.catalog.empty()) run.input(o.catalog.catalog);
  if (!o.probe.empty()) run.input(o.probe);
  if (!o.classifier.empty()) run.input(o.classifier);
  run.seed("seed", o.seed);
  run.seed("world_seed", o.world.world_seed);
  run.seed("catalog_seed", o.catalog.catalog_seed);

  p.catalog = load_catalog(o.catalog);
  p.bh = open_backend(o.world, p.catalog);
  p.layer = o.layer >= 0 ? o.layer : p.bh.backend->info().layer_count;
  for (const auto& city : p.catalog.cities) {
    p.prompts.push_back(dataset::build_prompt(city, tmpl));
    p.coords.push_back(city.location);
    p.city_ids.push_back(city.display_name);
  }
  const int layers[] = {p.layer};
  p.h = take(p.bh.backend->extract(p.prompts, layers, pooling).at(p.layer)).as_double();

  if (!o.probe.empty()) {
    p.probe = probes::probe_from_json(manifest::read_text(o.probe));
  } else {
    probes::TrainConfig train;
    train.seed = o.seed;
    const auto spec = probes::ProbeSpec::linear(probes::parse_loss(o.loss), o.seed);
    p.probe = {spec, probes::train_probe(p.h, dataset::geo_targets(p.catalog), spec, train).params};
  }
  return p;
}

/// Holds whichever head the run scores with.
struct HeadHandle {
  std::optional<probes::ClassifierParams> classifier;
  std::unique_ptr<CountryHead> head;
  std::vector<std::size_t> labels;
};

HeadHandle make_head(const InterveneOptions& o, Prepared& p, bool propagate) {
  HeadHandle hh;
  if (o.head == "synthetic") {
    if (!p.bh.world) throw ConfigError("--head synthetic needs the synthetic backend");
    if (propagate) throw ConfigError("--head synthetic reads the perturbed layer; use --head classifier with --propagate");
    hh.head = std::make_unique<synthetic::DownstreamHead>(*p.bh.world, p.layer);
    hh.labels = p.bh.world->labels();
    return hh;
  }
  hh.labels = p.bh.world ? p.bh.world->labels() : p.catalog.labels();
  if (!o.classifier.empty()) {
    hh.classifier = probes::classifier_from_json(manifest::read_text(o.classifier));
    if (hh.classifier->countries != p.catalog.countries)
      throw LabelError("classifier countries do not match the catalog");
  } else {
    Eigen::MatrixXd features = p.h;
    if (propagate) {
      activations::ActivationSet set;
      set.values = p.h.cast<float>();
      set.layer = p.layer;
      set.pooling = activations::Pooling::last_city_token;
      set.city_ids = p.city_ids;
      const auto ref = backend::write_tensor(*p.bh.scratch, "clean", set);
      const auto result = p.bh.backend->forward_from(p.layer, ref, backend::PositionMode::last_city_token, p.prompts);
      features = take(result.last_layer).as_double();
      std::error_code ec;
      fs::remove(ref.path, ec);
      fs::remove(result.logits.path, ec);
    }
    probes::TrainConfig train;
    train.seed = o.seed;
    train.step_size = o.classifier_step;
    train.max_epochs = o.classifier_epochs;
    train.patience = o.classifier_epochs;
    hh.classifier = probes::train_country_classifier(features, hh.labels, p.catalog.countries, train);
  }
  hh.head = std::make_unique<ClassifierHead>(*hh.classifier);
  return hh;
}

std::string logit_change_csv(const dataset::CityCatalog& catalog, const Eigen::VectorXd& per_country) {
  const auto centroids = dataset::country_centroids(catalog);
  std::ostringstream csv;
  csv << "country,lat,lng,logit_change\n";
  for (std::size_t c = 0; c < centroids.size() && static_cast<Eigen::Index>(c) < per_country.size(); ++c)
    csv << csv_field(centroids[c].country) << ',' << num(centroids[c].location.lat) << ','
        << num(centroids[c].location.lng) << ',' << num(per_country(static_cast<Eigen::Index>(c))) << '\n';
  return csv.str();
}

/// Mean final true-label logit change of each country's cities.
Eigen::VectorXd per_country_change(const intervention::InterventionTrace& trace, const std::vector<std::size_t>& country_of,
                                   std::size_t countries) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(countries));
  Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(countries));
  for (Eigen::Index i = 0; i < trace.final_logit_change.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(country_of[static_cast<std::size_t>(i)]);
    sum(c) += trace.final_logit_change(i);
    count(c) += 1.0;
  }
  for (Eigen::Index c = 0; c < sum.size(); ++c)
    if (count(c) > 0) sum(c) /= count(c);
  return sum;
}

void write_trace(Run& run, const intervention::InterventionTrace& trace, const dataset::CityCatalog& catalog,
                 const std::vector<std::size_t>& country_of) {
  run.write("trace.csv", intervention::trace_to_csv(trace));
  run.write("summary.json", intervention::trace_summary_json(trace) + "\n");
  run.write("logit_change.csv",
            logit_change_csv(catalog, per_country_change(trace, country_of, catalog.countries.size())));
}

void cmd_intervene_country(const InterveneOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  const auto cfg = intervention_config(o);
  const auto tmpl = parse_template(o.tmpl);
  const auto pooling = activations::parse_pooling(o.pooling);
  Run run("intervene country", app, o.out, argc, argv);
  auto p = prepare(o, run, tmpl, pooling);
  const bool propagate = cfg.propagate.value_or(false);
  auto hh = make_head(o, p, propagate);

  intervention::CountryTask task{p.h, p.coords, hh.labels, p.city_ids, {}, p.layer};
  if (propagate) task.prompts = p.prompts;
  const auto trace =
      intervention::run_country_intervention(task, p.probe, *hh.head, cfg, p.bh.backend.get(), p.bh.scratch.get());
  write_trace(run, trace, p.catalog, hh.labels);
  run.finish();
}

void cmd_intervene_nextword(const InterveneOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  auto cfg = intervention_config(o);
  if (cfg.propagate == false) throw ConfigError("next-word interventions always resume the model");
  cfg.propagate = true;
  Run run("intervene nextword", app, o.out, argc, argv);
  auto p = prepare(o, run, dataset::PromptTemplate::country, activations::Pooling::last_city_token);

  intervention::NextWordTask task;
  task.prompts = p.prompts;
  task.coords = p.coords;
  task.city_ids = p.city_ids;
  task.layer = p.layer;
  for (const auto& city : p.catalog.cities) task.labels.push_back(city.country);
  const auto trace = intervention::run_nextword_intervention(*p.bh.backend, *p.bh.scratch, task, p.probe, cfg);
  write_trace(run, trace, p.catalog, p.catalog.labels());
  run.finish();
}

void cmd_intervene_targeted(const InterveneOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  auto cfg = intervention_config(o);
  const auto tmpl = parse_template(o.tmpl);
  const auto pooling = activations::parse_pooling(o.pooling);
  Run run("intervene targeted", app, o.out, argc, argv);
  auto p = prepare(o, run, tmpl, pooling);
  const auto& substitute = p.catalog.city(o.substitute);
  auto hh = make_head(o, p, false);
  intervention::CountryTask task{p.h, p.coords, hh.labels, p.city_ids, {}, p.layer};
  const Eigen::VectorXd change = intervention::run_targeted(task, p.probe, *hh.head, o.city, substitute.location, cfg);

  run.write("logit_change.csv", logit_change_csv(p.catalog, change));
  const json summary = {{"format", "geoprobe.targeted"},
                        {"version", 1},
                        {"city", o.city},
                        {"substitute", o.substitute},
                        {"target", {substitute.location.lat, substitute.location.lng}},
                        {"iterations", cfg.iterations},
                        {"loss", probes::loss_name(cfg.loss)},
                        {"seed", cfg.seed},
                        {"logit_change", std::vector<double>(change.data(), change.data() + change.size())}};
  run.write("summary.json", summary.dump(2) + "\n");
  run.finish();
}

// report -------------------------------------------------------------------

struct ReportOptions {
  std::vector<std::string> runs;
  std::string out;
};

void cmd_report(const ReportOptions& o, const CLI::App* app, int argc, const char* const* argv) {
  Run run("report", app, o.out, argc, argv);
  const auto tmp = run.dir() / ".staging";
  for (std::size_t r = 0; r < o.runs.size(); ++r) {
    const fs::path dir(o.runs[r]);
    if (fs::exists(dir / manifest::kManifestName)) run.input(dir / manifest::kManifestName);
    if (o.runs.size() == 1) {
      report::generate_report(dir, run.dir());
      continue;
    }
    fs::remove_all(tmp);
    const auto written = report::generate_report(dir, tmp);
    const std::string prefix = "run" + std::to_string(r) + "_";
    for (const auto& name : written) fs::rename(tmp / name, run.dir() / (prefix + name));
    fs::remove_all(tmp);
  }
  run.finish();
}

void print_error(std::ostream& err, const std::string& command, const std::string& code, const std::string& message) {
  err << json{{"error", code}, {"message", message}, {"command", command}}.dump() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Geospatial probing toolkit", "geoprobe"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a city catalog");
  auto* csv = ingest_cmd->add_option("--csv", ingest.csv, "world-cities CSV")->check(CLI::ExistingFile);
  ingest_cmd->add_option("--synthetic-countries", ingest.synthetic_countries, "generate this many countries")
      ->excludes(csv);
  ingest_cmd->add_option("--synthetic-cities", ingest.synthetic_cities, "cities per generated country")->excludes(csv);
  ingest_cmd->add_option("--top-k", ingest.top_k, "countries kept by city count");
  ingest_cmd->add_option("--seed", ingest.seed, "seed");
  ingest_cmd->add_option("--out", ingest.out, "output directory")->required();

  ExtractOptions extract;
  auto* extract_cmd = app.add_subcommand("extract", "extract pooled activations");
  add_catalog_options(extract_cmd, extract.catalog, true);
  add_world_options(extract_cmd, extract.world);
  extract_cmd->add_option("--layers", extract.layers, "layers to extract (default: last)")->delimiter(',');
  extract_cmd->add_option("--pooling", extract.pooling, "mean_all, mean_nonpad or last_city_token");
  extract_cmd->add_option("--template", extract.tmpl, "prompt template: coords or country")
      ->check(CLI::IsMember({"coords", "country"}));
  extract_cmd->add_option("--out", extract.out, "output directory")->required();

  ProbeOptions probe;
  auto* probe_cmd = app.add_subcommand("probe", "cross-validate a location probe");
  probe_cmd->add_option("--activations", probe.activations, "GACT file")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--targets", probe.targets, "catalog.json")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--kind", probe.kind, "linear or ffnn")->check(CLI::IsMember({"linear", "ffnn"}));
  probe_cmd->add_option("--loss", probe.loss, "mse or geodist")->check(CLI::IsMember({"mse", "geodist"}));
  probe_cmd->add_option("--folds", probe.folds, "cross-validation folds");
  probe_cmd->add_option("--depth", probe.depth, "ffnn hidden layers");
  probe_cmd->add_option("--width", probe.width, "ffnn hidden width");
  probe_cmd->add_option("--grid", probe.grid, "ffnn grid: 'default' or DEPTHxWIDTH,...");
  probe_cmd->add_option("--step-size", probe.step_size, "SGD step size");
  probe_cmd->add_option("--batch-size", probe.batch_size, "SGD batch size");
  probe_cmd->add_option("--epochs", probe.epochs, "maximum epochs");
  probe_cmd->add_option("--patience", probe.patience, "early-stopping patience");
  probe_cmd->add_option("--holdout", probe.holdout, "holdout fraction for early stopping");
  probe_cmd->add_option("--step-decay", probe.step_decay, "step decay per epoch");
  probe_cmd->add_option("--solver", probe.solver, "auto, sgd or closed_form")
      ->check(CLI::IsMember({"auto", "sgd", "closed_form"}));
  probe_cmd->add_flag("--no-warm-start", probe.no_warm_start, "start SGD from a random initialization");
  probe_cmd->add_option("--seed", probe.seed, "seed");
  probe_cmd->add_option("--out", probe.out, "output directory")->required();

  RsaOptions rsa_opts;
  auto* rsa_cmd = app.add_subcommand("rsa", "representational similarity against geography");
  rsa_cmd->add_option("--activations", rsa_opts.activations, "GACT file")->required()->check(CLI::ExistingFile);
  rsa_cmd->add_option("--catalog", rsa_opts.catalog, "catalog.json")->required()->check(CLI::ExistingFile);
  rsa_cmd->add_option("--metric", rsa_opts.metric, "spearman, cosine, euclidean or all");
  rsa_cmd->add_option("--scaling", rsa_opts.scaling, "euclidean scaling: zscore or sqrt_d")
      ->check(CLI::IsMember({"zscore", "sqrt_d"}));
  rsa_cmd->add_option("--out", rsa_opts.out, "output directory")->required();

  auto* intervene_cmd = app.add_subcommand("intervene", "perturb activations along probe gradients");
  intervene_cmd->require_subcommand(1);
  InterveneOptions country, nextword, targeted;
  auto* country_cmd = intervene_cmd->add_subcommand("country", "country classification task");
  add_intervene_options(country_cmd, country, false);
  auto* nextword_cmd = intervene_cmd->add_subcommand("nextword", "next-word country prediction task");
  add_intervene_options(nextword_cmd, nextword, false);
  auto* targeted_cmd = intervene_cmd->add_subcommand("targeted", "move one city toward another's coordinates");
  add_intervene_options(targeted_cmd, targeted, true);

  ReportOptions report_opts;
  auto* report_cmd = app.add_subcommand("report", "figures and tables from run directories");
  report_cmd->add_option("--run", report_opts.runs, "run directory (repeatable)")->required();
  report_cmd->add_option("--out", report_opts.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().back()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }

  std::string command;
  try {
    if (ingest_cmd->parsed()) {
      command = "ingest";
      cmd_ingest(ingest, ingest_cmd, argc, argv);
    } else if (extract_cmd->parsed()) {
      command = "extract";
      cmd_extract(extract, extract_cmd, argc, argv);
    } else if (probe_cmd->parsed()) {
      command = "probe";
      cmd_probe(probe, probe_cmd, argc, argv);
    } else if (rsa_cmd->parsed()) {
      command = "rsa";
      cmd_rsa(rsa_opts, rsa_cmd, argc, argv);
    } else if (country_cmd->parsed()) {
      command = "intervene country";
      cmd_intervene_country(country, country_cmd, argc, argv);
    } else if (nextword_cmd->parsed()) {
      command = "intervene nextword";
      cmd_intervene_nextword(nextword, nextword_cmd, argc, argv);
    } else if (targeted_cmd->parsed()) {
      command = "intervene targeted";
      cmd_intervene_targeted(targeted, targeted_cmd, argc, argv);
    } else if (report_cmd->parsed()) {
      command = "report";
      cmd_report(report_opts, report_cmd, argc, argv);
    }
  } catch (const Error& e) {
    print_error(err, command, std::string(error_code_name(e.code())), e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    print_error(err, command, "io_error", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, command, "internal_error", e.what());
    return 1;
  }
  return 0;
}

int run_synthetic_server(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic model behind the geoprobe backend protocol", "geoprobe-synthetic-server"};
  CatalogOptions catalog_opts;
  WorldOptions world;
  add_catalog_options(&app, catalog_opts, false);
  app.add_option("--d", world.d, "hidden width")->check(CLI::PositiveNumber);
  app.add_option("--noise-sigma", world.noise_sigma, "per-city noise");
  app.add_option("--distractor-scale", world.distractor_scale, "distractor scale");
  app.add_option("--layer-count", world.layer_count, "layer count")->check(CLI::PositiveNumber);
  app.add_option("--world-seed", world.world_seed, "world seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }
  try {
    auto model = std::make_shared<const synthetic::SyntheticWorld>(load_catalog(catalog_opts), world_config(world));
    synthetic::SyntheticBackend backend(model, std::make_shared<backend::ScratchSpace>());
    protocol::serve(backend, in, out);
  } catch (const Error& e) {
    print_error(err, "serve", std::string(error_code_name(e.code())), e.what());
    return 1;
  }
  return 0;
}

}  // namespace geoprobe::cli
