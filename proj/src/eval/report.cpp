#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <sstream>

#include "ocskill/errors.hpp"
#include "ocskill/eval/eval.hpp"

namespace ocskill::eval {

namespace {

template <class Key>
std::vector<ReportRow> rows_from(const std::map<Key, std::pair<int, int>>& counts,
                                 const std::map<Key, std::pair<std::string, std::string>>& names) {
  std::vector<ReportRow> rows;
  for (const auto& [key, c] : counts) {
    ReportRow r;
    r.method = names.at(key).first;
    r.task = names.at(key).second;
    r.successes = c.first;
    r.n = c.second;
    r.rate = static_cast<double>(r.successes) / r.n;
    std::tie(r.lo, r.hi) = wilson_interval(r.successes, r.n);
    rows.push_back(r);
  }
  return rows;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

std::vector<ReportRow> aggregate(const std::vector<TrialResult>& results) {
  using Key = std::pair<int, int>;
  std::map<Key, std::pair<int, int>> counts;
  std::map<Key, std::pair<std::string, std::string>> names;
  for (const auto& r : results) {
    const Key k{static_cast<int>(r.method), static_cast<int>(r.task)};
    counts[k].first += r.success;
    counts[k].second += 1;
    names[k] = {to_string(r.method), sim::to_string(r.task)};
  }
  return rows_from(counts, names);
}

std::vector<ReportRow> aggregate(const std::vector<IdentificationTrial>& trials) {
  using Key = std::pair<std::string, int>;
  std::map<Key, std::pair<int, int>> counts;
  std::map<Key, std::pair<std::string, std::string>> names;
  for (const auto& t : trials) {
    const Key k{t.method, static_cast<int>(t.task)};
    counts[k].first += t.success;
    counts[k].second += 1;
    names[k] = {t.method, sim::to_string(t.task)};
  }
  return rows_from(counts, names);
}

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "method,task,n,successes,rate,wsi_lo,wsi_hi\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.task << ',' << r.n << ',' << r.successes << ',' << fixed(r.rate, 4) << ','
        << fixed(r.lo, 4) << ',' << fixed(r.hi, 4) << '\n';
  }
}

void write_report_svg(const std::vector<ReportRow>& rows, const std::string& path, const std::string& title) {
  std::vector<std::string> methods, tasks;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : rows) {
    remember(methods, r.method);
    remember(tasks, r.task);
  }
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  const double bar = 18.0, gap = 24.0, left = 60.0, top = 40.0, plot_h = 240.0;
  const double group_w = bar * static_cast<double>(methods.size()) + gap;
  const double width = left + group_w * static_cast<double>(tasks.size()) + 200.0;
  const double height = top + plot_h + 60.0;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - v); };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<text x=\"" << fixed(left, 0) << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = 0.25 * k;
    out << "<line x1=\"" << fixed(left, 1) << "\" x2=\"" << fixed(left + group_w * tasks.size(), 1) << "\" y1=\""
        << fixed(y_of(v), 1) << "\" y2=\"" << fixed(y_of(v), 1) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << fixed(left - 8, 1) << "\" y=\"" << fixed(y_of(v) + 4, 1) << "\" text-anchor=\"end\">"
        << static_cast<int>(v * 100) << "%</text>\n";
  }
  for (const auto& r : rows) {
    const auto ti = static_cast<double>(std::find(tasks.begin(), tasks.end(), r.task) - tasks.begin());
    const auto mi = static_cast<std::size_t>(std::find(methods.begin(), methods.end(), r.method) - methods.begin());
    const double x = left + ti * group_w + gap / 2 + bar * static_cast<double>(mi);
    out << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(y_of(r.rate), 1) << "\" width=\"" << fixed(bar - 2, 1)
        << "\" height=\"" << fixed(plot_h * r.rate, 1) << "\" fill=\"" << palette[mi % 8] << "\"/>\n";
    const double cx = x + (bar - 2) / 2;
    out << "<line x1=\"" << fixed(cx, 1) << "\" x2=\"" << fixed(cx, 1) << "\" y1=\"" << fixed(y_of(r.lo), 1)
        << "\" y2=\"" << fixed(y_of(r.hi), 1) << "\" stroke=\"#000\"/>\n";
    for (double v : {r.lo, r.hi}) {
      out << "<line x1=\"" << fixed(cx - 4, 1) << "\" x2=\"" << fixed(cx + 4, 1) << "\" y1=\"" << fixed(y_of(v), 1)
          << "\" y2=\"" << fixed(y_of(v), 1) << "\" stroke=\"#000\"/>\n";
    }
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    out << "<text x=\"" << fixed(left + group_w * t + group_w / 2, 1) << "\" y=\"" << fixed(top + plot_h + 18, 1)
        << "\" text-anchor=\"middle\">" << tasks[t] << "</text>\n";
  }
  const double lx = left + group_w * tasks.size() + 20;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const double ly = top + 16.0 * m;
    out << "<rect x=\"" << fixed(lx, 1) << "\" y=\"" << fixed(ly, 1) << "\" width=\"10\" height=\"10\" fill=\""
        << palette[m % 8] << "\"/>\n";
    out << "<text x=\"" << fixed(lx + 14, 1) << "\" y=\"" << fixed(ly + 9, 1) << "\">" << methods[m] << "</text>\n";
  }
  out << "</svg>\n";
}

void write_failures_csv(const std::vector<TrialResult>& results, const std::string& path) {
  std::map<std::tuple<int, int, int>, int> counts;
  for (const auto& r : results) {
    if (r.success != (r.failure_stage == Stage::none)) throw UsageError("trial outcome and failure stage disagree");
    ++counts[{static_cast<int>(r.method), static_cast<int>(r.task), static_cast<int>(r.failure_stage)}];
  }
  auto out = open_out(path);
  out << "method,task,stage,count\n";
  for (const auto& [k, c] : counts) {
    out << to_string(static_cast<Method>(std::get<0>(k))) << ','
        << sim::to_string(static_cast<sim::SocketVariant>(std::get<1>(k))) << ','
        << to_string(static_cast<Stage>(std::get<2>(k))) << ',' << c << '\n';
  }
}

std::string trial_json(const TrialResult& r) {
  nlohmann::ordered_json j;
  j["method"] = to_string(r.method);
  j["task"] = sim::to_string(r.task);
  j["seed"] = r.seed;
  j["success"] = r.success;
  j["failure_stage"] = to_string(r.failure_stage);
  j["detail"] = r.detail;
  j["pre_transition_error"] = r.pre_transition_error;
  j["post_transition_error"] = r.post_transition_error;
  j["plan_waypoints"] = r.plan_waypoints;
  j["skill_steps"] = r.skill_steps;
  j["final_ee"] = {r.final_ee.x, r.final_ee.y};
  j["timings"] = r.timings;
  return j.dump(2);
}

std::vector<ReportRow> aggregate_and_emit(const std::vector<TrialResult>& results, const std::string& dir) {
  if (results.empty()) throw UsageError("no trial results to report");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "trials");
  const auto rows = aggregate(results);
  write_report_csv(rows, (fs::path(dir) / "report.csv").string());
  write_report_svg(rows, (fs::path(dir) / "report.svg").string(), "Success rate with 95% Wilson intervals");
  write_failures_csv(results, (fs::path(dir) / "failures.csv").string());
  for (const auto& r : results) {
    const auto name = to_string(r.method) + "_" + sim::to_string(r.task) + "_" + std::to_string(r.seed) + ".json";
    auto out = open_out((fs::path(dir) / "trials" / name).string());
    out << trial_json(r) << '\n';
  }
  return rows;
}

}  // namespace ocskill::eval
