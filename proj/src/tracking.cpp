#include "alsim/tracking.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "alsim/digest.hpp"
#include "alsim/errors.hpp"

namespace alsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kManifest = "MANIFEST";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so readers never observe a partial file.
void write_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

class FileLock {
 public:
  explicit FileLock(const fs::path& path) : fd_(::open(path.c_str(), O_CREAT | O_RDWR, 0644)) {
    if (fd_ < 0) throw IoError("cannot open lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

void check_name(std::string_view name) {
  if (name.empty() || name == kManifest || name.find('/') != std::string_view::npos || name.front() == '.') {
    throw ValidationError("artifact", "invalid artifact name '" + std::string(name) + "'");
  }
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string format_value(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct CsvRow {
  std::int64_t step_index;
  std::uint64_t labeled_count;
  std::string metric;
  double value;
};

std::vector<CsvRow> parse_curve_rows(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != kCurveCsvHeader) throw ParseError("curve CSV: missing header");
  std::vector<CsvRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw ParseError(fmt::format("curve CSV line {}: expected 4 fields", lineno));
    try {
      rows.push_back({std::stoll(f[0]), std::stoull(f[1]), f[2], std::stod(f[3])});
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("curve CSV line {}: malformed number", lineno));
    }
  }
  return rows;
}

}  // namespace

std::string_view to_string(RunStatus status) {
  switch (status) {
    case RunStatus::running:
      return "running";
    case RunStatus::success:
      return "success";
    case RunStatus::failed:
      return "failed";
  }
  return "failed";
}

RunStatus parse_run_status(std::string_view text) {
  if (text == "running") return RunStatus::running;
  if (text == "success") return RunStatus::success;
  if (text == "failed") return RunStatus::failed;
  throw CorruptArtifact("unknown run status '" + std::string(text) + "'");
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "runs", ec);
  if (ec) throw IoError("cannot create run store at " + root_.string() + ": " + ec.message());
}

std::string RunStore::run_id_for(std::string_view step_name, std::string_view fingerprint,
                                 std::string_view revision) {
  std::string prefix;
  for (char c : step_name) prefix.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  const std::string key = fmt::format("{}\n{}\n{}", step_name, fingerprint, revision);
  return prefix + "-" + sha256_hex(key).substr(0, 16);
}

std::optional<RunRecord> RunStore::load_run(const fs::path& dir) const {
  if (!fs::exists(dir / "params.json")) return std::nullopt;
  const json params = json::parse(read_text(dir / "params.json"));
  RunRecord run;
  run.run_id = dir.filename().string();
  run.step_name = params.at("step").get<std::string>();
  run.fingerprint = params.at("fingerprint").get<std::string>();
  run.revision = params.at("revision").get<std::string>();
  std::string status = fs::exists(dir / "status") ? read_text(dir / "status") : "failed";
  while (!status.empty() && (status.back() == '\n' || status.back() == ' ')) status.pop_back();
  run.status = parse_run_status(status);
  run.dir = dir;
  return run;
}

std::optional<RunRecord> RunStore::find_matching_run(std::string_view step_name, std::string_view fingerprint,
                                                     std::string_view revision) const {
  std::lock_guard lock(mutex_);
  try {
    auto run = load_run(root_ / "runs" / run_id_for(step_name, fingerprint, revision));
    if (run && (run->fingerprint != fingerprint || run->revision != revision || run->step_name != step_name)) {
      throw CorruptArtifact("run record " + run->run_id + " does not match its key");
    }
    return run;
  } catch (const json::exception& e) {
    throw IoError(std::string("run store unreadable: ") + e.what());
  }
}

std::optional<RunRecord> RunStore::get_run(std::string_view run_id) const {
  std::lock_guard lock(mutex_);
  if (run_id.empty() || run_id.find('/') != std::string_view::npos) return std::nullopt;
  return load_run(root_ / "runs" / std::string(run_id));
}

std::vector<RunRecord> RunStore::list_runs() const {
  std::lock_guard lock(mutex_);
  std::vector<RunRecord> out;
  std::set<std::string> seen;
  const fs::path index = root_ / "index.jsonl";
  if (!fs::exists(index)) return out;
  std::istringstream in(read_text(index));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto id = json::parse(line).at("run_id").get<std::string>();
    if (!seen.insert(id).second) continue;
    if (auto run = load_run(root_ / "runs" / id)) out.push_back(std::move(*run));
  }
  return out;
}

RunRecord RunStore::begin_run(std::string_view step_name, std::string_view fingerprint, std::string_view revision,
                              const json& params) {
  const std::string id = run_id_for(step_name, fingerprint, revision);
  const fs::path dir = root_ / "runs" / id;
  bool fresh = false;
  {
    std::lock_guard lock(mutex_);
    if (auto existing = load_run(dir)) {
      if (existing->status == RunStatus::success) {
        throw ValidationError("run", "refusing to reopen successful run " + id);
      }
    } else {
      fresh = true;
      fs::create_directories(dir / "artifacts");
      json p = {{"step", std::string(step_name)},
                {"fingerprint", std::string(fingerprint)},
                {"revision", std::string(revision)},
                {"params", params}};
      write_atomic(dir / "params.json", p.dump(2) + "\n");
    }
    write_atomic(dir / "status", "running\n");
  }
  if (fresh) {
    json entry = {{"run_id", id},
                  {"step", std::string(step_name)},
                  {"fingerprint", std::string(fingerprint)},
                  {"revision", std::string(revision)}};
    append_locked(root_ / "index.jsonl", entry.dump());
  }
  RunRecord run;
  run.run_id = id;
  run.step_name = step_name;
  run.fingerprint = fingerprint;
  run.revision = revision;
  run.status = RunStatus::running;
  run.dir = dir;
  return run;
}

void RunStore::set_status(RunRecord& run, RunStatus status) {
  std::lock_guard lock(mutex_);
  if (auto current = load_run(run.dir); current && current->status == RunStatus::success) {
    if (status == RunStatus::success) return;
    throw ValidationError("run", "refusing to rewrite successful run " + run.run_id);
  }
  write_atomic(run.dir / "status", std::string(to_string(status)) + "\n");
  run.status = status;
}

void RunStore::log_metric(const RunRecord& run, std::int64_t step_index, std::string_view name, double value) {
  if (name.find_first_of(",\n") != std::string_view::npos) throw ValidationError("metric", "invalid metric name");
  append_locked(run.dir / "metrics", fmt::format("{},{},{}", step_index, name, format_value(value)));
}

std::vector<MetricRow> RunStore::metrics(const RunRecord& run) const {
  std::vector<MetricRow> out;
  const fs::path file = run.dir / "metrics";
  if (!fs::exists(file)) return out;
  std::istringstream in(read_text(file));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw CorruptArtifact("metrics: malformed line in " + run.run_id);
    out.push_back({std::stoll(f[0]), f[1], std::stod(f[2])});
  }
  return out;
}

std::map<std::string, std::string> RunStore::manifest(const RunRecord& run) const {
  const fs::path file = run.dir / "artifacts" / std::string(kManifest);
  if (!fs::exists(file)) return {};
  try {
    return json::parse(read_text(file)).get<std::map<std::string, std::string>>();
  } catch (const json::exception&) {
    throw CorruptArtifact("artifact manifest unreadable in " + run.run_id);
  }
}

void RunStore::put_artifact(const RunRecord& run, std::string_view name, std::string_view bytes) {
  check_name(name);
  std::lock_guard lock(mutex_);
  fs::create_directories(run.dir / "artifacts");
  write_atomic(run.dir / "artifacts" / std::string(name), bytes);
  auto m = manifest(run);
  m[std::string(name)] = sha256_hex(bytes);
  write_atomic(run.dir / "artifacts" / std::string(kManifest), json(m).dump(2) + "\n");
}

bool RunStore::has_artifact(const RunRecord& run, std::string_view name) const {
  std::lock_guard lock(mutex_);
  return manifest(run).contains(std::string(name));
}

void RunStore::remove_artifact(const RunRecord& run, std::string_view name) {
  check_name(name);
  std::lock_guard lock(mutex_);
  auto m = manifest(run);
  if (m.erase(std::string(name)) == 0) return;
  write_atomic(run.dir / "artifacts" / std::string(kManifest), json(m).dump(2) + "\n");
  std::error_code ec;
  fs::remove(run.dir / "artifacts" / std::string(name), ec);
}

std::string RunStore::get_artifact(const RunRecord& run, std::string_view name) const {
  check_name(name);
  std::lock_guard lock(mutex_);
  const auto m = manifest(run);
  auto it = m.find(std::string(name));
  if (it == m.end()) throw CorruptArtifact("artifact '" + std::string(name) + "' missing from " + run.run_id);
  const fs::path file = run.dir / "artifacts" / std::string(name);
  if (!fs::exists(file)) throw CorruptArtifact("artifact file missing: " + file.string());
  std::string bytes = read_text(file);
  if (sha256_hex(bytes) != it->second) throw CorruptArtifact("digest mismatch for " + file.string());
  return bytes;
}

fs::path RunStore::artifact_path(const RunRecord& run, std::string_view name) const {
  check_name(name);
  return run.dir / "artifacts" / std::string(name);
}

json RunStore::params(const RunRecord& run) const {
  std::lock_guard lock(mutex_);
  return json::parse(read_text(run.dir / "params.json")).at("params");
}

void RunStore::log_execution(std::string_view event) { append_locked(root_ / "execution.log", event); }

std::vector<std::string> RunStore::execution_log() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  const fs::path file = root_ / "execution.log";
  if (!fs::exists(file)) return out;
  std::istringstream in(read_text(file));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void RunStore::append_locked(const fs::path& file, std::string_view line) {
  std::lock_guard lock(mutex_);
  FileLock flock(root_ / "store.lock");
  std::ofstream out(file, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + file.string());
  std::string buf(line);
  buf.push_back('\n');
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError("append failed: " + file.string());
}

AggregatedCurve aggregate_seed_runs(std::span<const LearningCurve> curves) {
  if (curves.empty()) throw ValidationError("curves", "nothing to aggregate");

  std::map<std::int64_t, std::vector<std::pair<std::int64_t, const CurvePoint*>>> by_step;
  for (const auto& curve : curves) {
    for (const auto& p : curve.points) by_step[p.step_index].emplace_back(curve.seed, &p);
  }

  AggregatedCurve out;
  for (const auto& [step, members] : by_step) {
    AggregatePoint agg;
    agg.step_index = step;
    agg.labeled_count = members.front().second->labeled_count;
    agg.seed_count = members.size();
    for (const auto& [seed, p] : members) {
      if (p->labeled_count != agg.labeled_count) {
        std::string seeds;
        for (const auto& [s, q] : members) seeds += fmt::format(" {}(labeled={})", s, q->labeled_count);
        throw ValidationError("curves", fmt::format("labeled counts disagree at step {}:{}", step, seeds));
      }
    }

    std::map<std::string, std::vector<double>> values;
    for (const auto& [seed, p] : members) {
      for (const auto& [name, v] : p->metrics) values[name].push_back(v);
    }
    for (const auto& [name, vs] : values) {
      MetricStats s;
      double sum = 0.0;
      s.min = std::numeric_limits<double>::infinity();
      s.max = -std::numeric_limits<double>::infinity();
      for (double v : vs) {
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
      }
      s.mean = sum / static_cast<double>(vs.size());
      double sq = 0.0;
      for (double v : vs) sq += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(sq / static_cast<double>(vs.size()));
      agg.metrics[name] = s;
    }
    out.points.push_back(std::move(agg));
  }
  return out;
}

std::string curve_to_csv(const LearningCurve& curve) {
  std::string out(kCurveCsvHeader);
  out.push_back('\n');
  for (const auto& p : curve.points) {
    for (const auto& [name, v] : p.metrics) {
      out += fmt::format("{},{},{},{}\n", p.step_index, p.labeled_count, name, format_value(v));
    }
  }
  return out;
}

LearningCurve curve_from_csv(std::string_view csv, std::int64_t seed) {
  LearningCurve curve;
  curve.seed = seed;
  for (auto& row : parse_curve_rows(csv)) {
    if (curve.points.empty() || curve.points.back().step_index != row.step_index) {
      curve.points.push_back({row.step_index, row.labeled_count, {}});
    }
    curve.points.back().metrics[row.metric] = row.value;
  }
  return curve;
}

std::string aggregate_to_csv(const AggregatedCurve& curve) {
  std::string out(kCurveCsvHeader);
  out.push_back('\n');
  for (const auto& p : curve.points) {
    for (const auto& [name, s] : p.metrics) {
      out += fmt::format("{},{},{}_mean,{}\n", p.step_index, p.labeled_count, name, format_value(s.mean));
      out += fmt::format("{},{},{}_min,{}\n", p.step_index, p.labeled_count, name, format_value(s.min));
      out += fmt::format("{},{},{}_max,{}\n", p.step_index, p.labeled_count, name, format_value(s.max));
      out += fmt::format("{},{},{}_std,{}\n", p.step_index, p.labeled_count, name, format_value(s.stddev));
    }
  }
  return out;
}

AggregatedCurve aggregate_from_csv(std::string_view csv) {
  AggregatedCurve curve;
  for (auto& row : parse_curve_rows(csv)) {
    if (curve.points.empty() || curve.points.back().step_index != row.step_index) {
      AggregatePoint p;
      p.step_index = row.step_index;
      p.labeled_count = row.labeled_count;
      curve.points.push_back(std::move(p));
    }
    const auto us = row.metric.rfind('_');
    if (us == std::string::npos) throw ParseError("aggregate CSV: metric without statistic suffix");
    const std::string base = row.metric.substr(0, us);
    const std::string stat = row.metric.substr(us + 1);
    auto& s = curve.points.back().metrics[base];
    if (stat == "mean") {
      s.mean = row.value;
    } else if (stat == "min") {
      s.min = row.value;
    } else if (stat == "max") {
      s.max = row.value;
    } else if (stat == "std") {
      s.stddev = row.value;
    } else {
      throw ParseError("aggregate CSV: unknown statistic '" + stat + "'");
    }
  }
  return curve;
}

std::string render_svg(std::span<const PlotSeries> series, std::string_view metric, std::string_view title) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double kWidth = 720, kHeight = 440, kLeft = 60, kRight = 170, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const std::string key(metric);

  double x_max = 1.0;
  double y_min = 1.0;
  double y_max = 0.0;
  for (const auto& s : series) {
    for (const auto& p : s.curve.points) {
      x_max = std::max(x_max, static_cast<double>(p.labeled_count));
      if (auto it = p.metrics.find(key); it != p.metrics.end()) {
        y_min = std::min(y_min, it->second.min);
        y_max = std::max(y_max, it->second.max);
      }
    }
  }
  if (y_max <= y_min) {
    y_min = 0.0;
    y_max = 1.0;
  }
  y_min = std::floor(y_min * 10.0) / 10.0;
  y_max = std::ceil(y_max * 10.0) / 10.0;
  if (y_max <= y_min) y_max = y_min + 0.1;

  auto sx = [&](double x) { return kLeft + x / x_max * plot_w; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight, kWidth, kHeight);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
                     kLeft + plot_w / 2, xml_escape(title));
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", kLeft,
                     kTop + plot_h, kLeft + plot_w);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", kLeft, kTop,
                     kTop + plot_h);
  for (int i = 0; i <= 5; ++i) {
    const double y = y_min + (y_max - y_min) * i / 5.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", kLeft - 6,
                       sy(y) + 4, y);
    const double x = x_max * i / 5.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.0f}</text>\n", sx(x),
                       kTop + plot_h + 18, x);
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">labeled documents</text>\n",
                     kLeft + plot_w / 2, kHeight - 10);
  svg += fmt::format("<text x=\"14\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1f})\">{}</text>\n",
                     kTop + plot_h / 2, kTop + plot_h / 2, xml_escape(metric));

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    std::string upper;
    std::string lower;
    std::string mean;
    for (const auto& p : series[i].curve.points) {
      auto it = p.metrics.find(key);
      if (it == p.metrics.end()) continue;
      const double x = sx(static_cast<double>(p.labeled_count));
      upper += fmt::format("{:.2f},{:.2f} ", x, sy(it->second.max));
      lower.insert(0, fmt::format("{:.2f},{:.2f} ", x, sy(it->second.min)));
      mean += fmt::format("{:.2f},{:.2f} ", x, sy(it->second.mean));
    }
    svg += fmt::format("<polygon points=\"{}{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", upper,
                       lower, color);
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", mean, color);
    const double ly = kTop + 20.0 * static_cast<double>(i) + 10;
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"{3}\" stroke-width=\"3\"/>\n",
                       kLeft + plot_w + 15, ly, kLeft + plot_w + 35, color);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", kLeft + plot_w + 40, ly + 4, xml_escape(series[i].label));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace alsim
