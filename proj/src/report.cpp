#include "geoprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "geoprobe/dataset.hpp"
#include "geoprobe/error.hpp"
#include "geoprobe/manifest.hpp"

namespace geoprobe::report {

namespace {

constexpr double kScale = 2.0;  // px per degree
constexpr double kMapW = 360.0 * kScale;
constexpr double kMapH = 180.0 * kScale;
constexpr double kMargin = 20.0;
constexpr double kLegendW = 180.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

double map_x(double lng) { return kMargin + (lng + 180.0) * kScale; }
double map_y(double lat) { return kMargin + (90.0 - lat) * kScale; }

std::string svg_open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
}

std::string map_frame(const std::string& title) {
  std::string s;
  s += "<rect x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" + num(kMapW) + "\" height=\"" +
       num(kMapH) + "\" fill=\"#f4f6f8\" stroke=\"#888888\"/>\n";
  for (int lng = -150; lng <= 150; lng += 30)
    s += "<line x1=\"" + num(map_x(lng)) + "\" y1=\"" + num(map_y(90)) + "\" x2=\"" + num(map_x(lng)) + "\" y2=\"" +
         num(map_y(-90)) + "\" stroke=\"#dddddd\"/>\n";
  for (int lat = -60; lat <= 60; lat += 30)
    s += "<line x1=\"" + num(map_x(-180)) + "\" y1=\"" + num(map_y(lat)) + "\" x2=\"" + num(map_x(180)) + "\" y2=\"" +
         num(map_y(lat)) + "\" stroke=\"#dddddd\"/>\n";
  s += "<text x=\"" + num(kMargin) + "\" y=\"14\">" + escape(title) + "</text>\n";
  return s;
}

void clamp_lat_lng(double& lat, double& lng) {
  lat = std::clamp(lat, -90.0, 90.0);
  lng = std::fmod(lng, 360.0);
  if (lng <= -180.0) lng += 360.0;
  if (lng > 180.0) lng -= 360.0;
}

}  // namespace

std::string palette(std::size_t i) {
  static const char* colours[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colours[i % 10];
}

std::string prediction_map_svg(const std::vector<MapPoint>& points, const std::string& title) {
  std::vector<std::string> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& p : points)
    if (index.emplace(p.group, groups.size()).second) groups.push_back(p.group);

  std::string s = svg_open(kMapW + 2 * kMargin + kLegendW, kMapH + 2 * kMargin);
  s += map_frame(title);
  for (const auto& p : points) {
    double tl = p.true_lat, tg = p.true_lng, pl = p.pred_lat, pg = p.pred_lng;
    clamp_lat_lng(tl, tg);
    clamp_lat_lng(pl, pg);
    const auto colour = palette(index[p.group]);
    s += "<circle cx=\"" + num(map_x(tg)) + "\" cy=\"" + num(map_y(tl)) + "\" r=\"3\" fill=\"none\" stroke=\"" +
         colour + "\"/>\n";
    s += "<circle cx=\"" + num(map_x(pg)) + "\" cy=\"" + num(map_y(pl)) + "\" r=\"1.5\" fill=\"" + colour + "\"/>\n";
  }
  const double lx = 2 * kMargin + kMapW;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double y = kMargin + 10.0 + 14.0 * static_cast<double>(g);
    s += "<rect x=\"" + num(lx) + "\" y=\"" + num(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" + palette(g) +
         "\"/>\n";
    s += "<text x=\"" + num(lx + 14) + "\" y=\"" + num(y) + "\">" + escape(groups[g]) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string signed_map_svg(const std::vector<SignedMarker>& markers, const std::string& title) {
  double largest = 0.0;
  for (const auto& m : markers) largest = std::max(largest, std::abs(m.value));
  std::string s = svg_open(kMapW + 2 * kMargin, kMapH + 2 * kMargin);
  s += map_frame(title);
  for (const auto& m : markers) {
    double lat = m.lat, lng = m.lng;
    clamp_lat_lng(lat, lng);
    const double r = largest > 0.0 ? 2.0 + 14.0 * std::sqrt(std::abs(m.value) / largest) : 2.0;
    const char* colour = m.value > 0 ? "#d62728" : (m.value < 0 ? "#1f77b4" : "#7f7f7f");
    s += "<circle cx=\"" + num(map_x(lng)) + "\" cy=\"" + num(map_y(lat)) + "\" r=\"" + num(r) + "\" fill=\"" +
         colour + "\" fill-opacity=\"0.6\"><title>" + escape(m.label) + " " + num(m.value) + "</title></circle>\n";
  }
  return s + "</svg>\n";
}

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
  const double w = 480, h = 300, left = 60, right = 140, top = 30, bottom = 40;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& sr : series)
    for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      x0 = std::min(x0, sr.x[i]);
      x1 = std::max(x1, sr.x[i]);
      y0 = std::min(y0, sr.y[i]);
      y1 = std::max(y1, sr.y[i]);
    }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string s = svg_open(w, h);
  s += "<text x=\"" + num(left) + "\" y=\"18\">" + escape(title) + "</text>\n";
  s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
       "\" fill=\"none\" stroke=\"#888888\"/>\n";
  s += "<text x=\"" + num(left) + "\" y=\"" + num(h - 22) + "\">" + num(x0) + "</text>\n";
  s += "<text x=\"" + num(left + pw) + "\" y=\"" + num(h - 22) + "\" text-anchor=\"end\">" + num(x1) + "</text>\n";
  s += "<text x=\"" + num(left - 4) + "\" y=\"" + num(top + ph) + "\" text-anchor=\"end\">" + num(y0) + "</text>\n";
  s += "<text x=\"" + num(left - 4) + "\" y=\"" + num(top + 8) + "\" text-anchor=\"end\">" + num(y1) + "</text>\n";
  s += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(h - 6) + "\" text-anchor=\"middle\">" + escape(x_label) +
       "</text>\n";
  s += "<text x=\"12\" y=\"" + num(top + ph / 2) + "\" transform=\"rotate(-90 12 " + num(top + ph / 2) +
       ")\" text-anchor=\"middle\">" + escape(y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    std::string pts;
    for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(px(sr.x[i])) + "," + num(py(sr.y[i]));
    }
    s += "<polyline fill=\"none\" stroke=\"" + palette(k) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = top + 10 + 14.0 * static_cast<double>(k);
    s += "<rect x=\"" + num(left + pw + 10) + "\" y=\"" + num(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
         palette(k) + "\"/>\n";
    s += "<text x=\"" + num(left + pw + 24) + "\" y=\"" + num(ly) + "\">" + escape(sr.name) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::vector<std::vector<std::string>> read_csv_table(const std::filesystem::path& path,
                                                     const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw ReportError("missing artifact: " + path.filename().string());
  std::string line;
  if (!std::getline(in, line)) throw ReportError("empty artifact: " + path.filename().string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = dataset::split_csv_line(line);
  std::vector<std::size_t> pick;
  for (const auto& c : columns) {
    auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw ReportError(path.filename().string() + " lacks column " + c);
    pick.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = dataset::split_csv_line(line);
    std::vector<std::string> row;
    for (auto k : pick) {
      if (k >= fields.size()) throw ReportError(path.filename().string() + " has a short row");
      row.push_back(fields[k]);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ReportError("empty artifact: " + path.filename().string());
  return rows;
}

namespace {

double to_double(const std::string& s, const std::string& file) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    throw ReportError(file + " has a non-numeric value: " + s);
  }
}

nlohmann::json read_json_artifact(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ReportError("missing artifact: " + path.filename().string());
  try {
    return nlohmann::json::parse(manifest::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ReportError(path.filename().string() + " is not valid JSON: " + e.what());
  }
}

void emit(const std::filesystem::path& out_dir, const std::string& name, const std::string& text,
          std::vector<std::string>& written) {
  manifest::write_text(out_dir / name, text);
  written.push_back(name);
}

void probe_report(const std::filesystem::path& run, const std::filesystem::path& out, std::vector<std::string>& written) {
  const auto cv = read_json_artifact(run / "cv_report.json");
  const auto rows = read_csv_table(run / "predictions.csv",
                                   {"city", "country", "true_lat", "true_lng", "pred_lat", "pred_lng"});
  std::vector<MapPoint> points;
  for (const auto& r : rows)
    points.push_back({r[1], to_double(r[2], "predictions.csv"), to_double(r[3], "predictions.csv"),
                      to_double(r[4], "predictions.csv"), to_double(r[5], "predictions.csv")});
  const int layer = cv.value("layer", 0);
  const std::string loss = cv.value("loss", "");
  emit(out, "map_layer" + std::to_string(layer) + ".svg",
       prediction_map_svg(points, "Predicted vs true locations, layer " + std::to_string(layer) + " (" + loss + ")"),
       written);

  std::ostringstream table;
  table.precision(10);
  table << "layer,kind,loss,fold,loss_value\n";
  const auto folds = cv.value("fold_losses", std::vector<double>{});
  for (std::size_t f = 0; f < folds.size(); ++f)
    table << layer << ',' << cv.value("kind", "") << ',' << loss << ',' << f << ',' << folds[f] << '\n';
  table << layer << ',' << cv.value("kind", "") << ',' << loss << ",mean," << cv.value("mean_loss", 0.0) << '\n';
  emit(out, "cv_table.csv", table.str(), written);

  if (std::filesystem::exists(run / "grid.csv")) {
    const auto grid = read_csv_table(run / "grid.csv", {"depth", "width", "mean_loss"});
    std::map<std::string, Series> by_depth;
    for (const auto& r : grid) {
      auto& sr = by_depth["l=" + r[0]];
      sr.name = "l=" + r[0];
      sr.x.push_back(to_double(r[1], "grid.csv"));
      sr.y.push_back(to_double(r[2], "grid.csv"));
    }
    std::vector<Series> series;
    for (auto& [_, sr] : by_depth) series.push_back(std::move(sr));
    emit(out, "grid.svg", line_chart_svg(series, "Grid search CV loss", "hidden width k", "mean CV loss"), written);
  }
}

std::vector<SignedMarker> read_logit_changes(const std::filesystem::path& path) {
  const auto changes = read_csv_table(path, {"country", "lat", "lng", "logit_change"});
  std::vector<SignedMarker> markers;
  for (const auto& r : changes)
    markers.push_back({r[0], to_double(r[1], "logit_change.csv"), to_double(r[2], "logit_change.csv"),
                       to_double(r[3], "logit_change.csv")});
  return markers;
}

void intervention_report(const std::filesystem::path& run, const std::filesystem::path& out,
                         std::vector<std::string>& written) {
  const auto rows = read_csv_table(run / "trace.csv", {"iteration", "probe_loss", "accuracy", "top5", "mean_logit_change"});
  Series loss{"probe loss", {}, {}}, acc{"accuracy", {}, {}}, top5{"top-5", {}, {}}, logit{"mean logit change", {}, {}};
  for (const auto& r : rows) {
    const double it = to_double(r[0], "trace.csv");
    for (auto* sr : {&loss, &acc, &top5, &logit}) sr->x.push_back(it);
    loss.y.push_back(to_double(r[1], "trace.csv"));
    acc.y.push_back(to_double(r[2], "trace.csv"));
    top5.y.push_back(to_double(r[3], "trace.csv"));
    logit.y.push_back(to_double(r[4], "trace.csv"));
  }
  emit(out, "probe_loss.svg", line_chart_svg({loss}, "Probe loss", "iteration", "mean probe loss"), written);
  emit(out, "accuracy.svg", line_chart_svg({acc, top5}, "Downstream accuracy", "iteration", "accuracy"), written);
  emit(out, "logit_change.svg", line_chart_svg({logit}, "True-label logit change", "iteration", "mean change"), written);
  emit(out, "trace_table.csv", manifest::read_text(run / "trace.csv"), written);

  if (std::filesystem::exists(run / "logit_change.csv")) {
    emit(out, "logit_change_map.svg", signed_map_svg(read_logit_changes(run / "logit_change.csv"), "Country logit change"),
         written);
  }
}

void targeted_report(const std::filesystem::path& run, const std::filesystem::path& out,
                     std::vector<std::string>& written) {
  const auto summary = read_json_artifact(run / "summary.json");
  const auto markers = read_logit_changes(run / "logit_change.csv");
  emit(out, "logit_change_map.svg",
       signed_map_svg(markers, "Logit change: " + summary.value("city", "") + " toward " +
                                   summary.value("substitute", "")),
       written);
  emit(out, "logit_change_table.csv", manifest::read_text(run / "logit_change.csv"), written);
}

void rsa_report(const std::filesystem::path& run, const std::filesystem::path& out, std::vector<std::string>& written) {
  std::vector<std::filesystem::path> reports;
  for (const auto& e : std::filesystem::directory_iterator(run)) {
    const auto name = e.path().filename().string();
    if (name.rfind("rsa_", 0) == 0 && e.path().extension() == ".json") reports.push_back(e.path());
  }
  if (reports.empty()) throw ReportError("missing artifact: rsa_<metric>.json");
  std::sort(reports.begin(), reports.end());
  std::ostringstream summary, per_country;
  summary.precision(10);
  per_country.precision(10);
  summary << "metric,layer,mean_tau,countries\n";
  per_country << "metric,country,tau,p_value\n";
  for (const auto& path : reports) {
    const auto j = read_json_artifact(path);
    const auto& countries = j.at("countries");
    summary << j.value("metric", "") << ',' << j.value("layer", 0) << ',' << j.value("mean_tau", 0.0) << ','
            << countries.size() << '\n';
    for (const auto& c : countries)
      per_country << j.value("metric", "") << ',' << c.value("country", "") << ',' << c.value("tau", 0.0) << ','
                  << c.value("p_value", 1.0) << '\n';
  }
  emit(out, "rsa_summary.csv", summary.str(), written);
  emit(out, "rsa_countries.csv", per_country.str(), written);
}

void ingest_report(const std::filesystem::path& run, const std::filesystem::path& out, std::vector<std::string>& written) {
  if (!std::filesystem::exists(run / "catalog.json")) throw ReportError("missing artifact: catalog.json");
  const auto catalog = dataset::read_catalog(run / "catalog.json");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : catalog.cities) ++counts[c.country];
  std::ostringstream table;
  table << "country,cities\n";
  for (const auto& country : catalog.countries) table << country << ',' << counts[country] << '\n';
  emit(out, "countries.csv", table.str(), written);
}

}  // namespace

std::vector<std::string> generate_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::exists(run_dir / manifest::kManifestName))
    throw ReportError("missing artifact: " + (run_dir / manifest::kManifestName).string());
  const auto m = manifest::read_manifest(run_dir);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());

  std::vector<std::string> written;
  if (m.command == "probe") {
    probe_report(run_dir, out_dir, written);
  } else if (m.command == "intervene targeted") {
    targeted_report(run_dir, out_dir, written);
  } else if (m.command.rfind("intervene", 0) == 0) {
    intervention_report(run_dir, out_dir, written);
  } else if (m.command == "rsa") {
    rsa_report(run_dir, out_dir, written);
  } else if (m.command == "ingest") {
    ingest_report(run_dir, out_dir, written);
  } else {
    throw ReportError("no report is defined for '" + m.command + "' runs");
  }
  return written;
}

}  // namespace geoprobe::report
