#pragma once

#include "devbo/param_space.hpp"
#include "devbo/similarity.hpp"

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace devbo {

enum class Phase { Init, Infill, Final };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::Init: return "init";
    case Phase::Infill: return "infill";
    case Phase::Final: return "final";
  }
  return "?";
}

inline Phase phase_from_string(const std::string& s) {
  if (s == "init") return Phase::Init;
  if (s == "infill") return Phase::Infill;
  if (s == "final") return Phase::Final;
  throw std::invalid_argument("unknown phase '" + s + "'");
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct EpisodicRecord {
  std::string run_id;
  std::size_t iteration = 0;
  Phase phase = Phase::Init;
  std::string object_label;
  ParamVector params_unit;
  std::vector<double> params_natural;
  double score = 0.0;
  std::string timestamp;

  bool operator==(const EpisodicRecord&) const = default;
};

struct ProceduralRecord {
  std::string run_id;
  std::string object_label;
  ParamVector best_params_unit;
  std::vector<double> final_scores;
  double final_mean = 0.0;
  double final_median = 0.0;

  bool operator==(const ProceduralRecord&) const = default;
};

struct SemanticRecord {
  std::string object_label;
  std::string cloud_path;  // relative to the store root
  ShapeFeature feature;

  FeatureKind feature_kind() const { return feature.kind; }
  bool operator==(const SemanticRecord&) const = default;
};

// Marks a run that stopped on an objective failure; its episodes stay.
struct AbortRecord {
  std::string run_id;
  std::string reason;
  std::string timestamp;

  bool operator==(const AbortRecord&) const = default;
};

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return (m % 2) ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

inline ProceduralRecord make_procedural(std::string run_id, std::string label, ParamVector best,
                                        std::vector<double> final_scores) {
  ProceduralRecord r{std::move(run_id), std::move(label), std::move(best), std::move(final_scores)};
  r.final_mean = mean_of(r.final_scores);
  r.final_median = median_of(r.final_scores);
  return r;
}

namespace detail {

inline constexpr int kSchemaVersion = 1;

inline nlohmann::json to_json(const EpisodicRecord& r) {
  return {{"v", kSchemaVersion}, {"kind", "episode"}, {"run_id", r.run_id},
          {"iteration", r.iteration}, {"phase", to_string(r.phase)},
          {"object_label", r.object_label}, {"params_unit", r.params_unit.coords()},
          {"params_natural", r.params_natural}, {"score", r.score}, {"timestamp", r.timestamp}};
}

inline nlohmann::json to_json(const ProceduralRecord& r) {
  return {{"v", kSchemaVersion}, {"kind", "strategy"}, {"run_id", r.run_id},
          {"object_label", r.object_label}, {"best_params_unit", r.best_params_unit.coords()},
          {"final_scores", r.final_scores}, {"final_mean", r.final_mean},
          {"final_median", r.final_median}};
}

inline nlohmann::json to_json(const SemanticRecord& r) {
  return {{"v", kSchemaVersion}, {"kind", "object"}, {"object_label", r.object_label},
          {"cloud_path", r.cloud_path}, {"feature_kind", to_string(r.feature.kind)},
          {"feature", r.feature.values}};
}

inline nlohmann::json to_json(const AbortRecord& r) {
  return {{"v", kSchemaVersion}, {"kind", "abort"}, {"run_id", r.run_id},
          {"reason", r.reason}, {"timestamp", r.timestamp}};
}

inline EpisodicRecord episode_from_json(const nlohmann::json& j) {
  return {j.at("run_id").get<std::string>(),
          j.at("iteration").get<std::size_t>(),
          phase_from_string(j.at("phase").get<std::string>()),
          j.at("object_label").get<std::string>(),
          ParamVector(j.at("params_unit").get<std::vector<double>>()),
          j.at("params_natural").get<std::vector<double>>(),
          j.at("score").get<double>(),
          j.at("timestamp").get<std::string>()};
}

inline ProceduralRecord strategy_from_json(const nlohmann::json& j) {
  return {j.at("run_id").get<std::string>(), j.at("object_label").get<std::string>(),
          ParamVector(j.at("best_params_unit").get<std::vector<double>>()),
          j.at("final_scores").get<std::vector<double>>(), j.at("final_mean").get<double>(),
          j.at("final_median").get<double>()};
}

inline SemanticRecord object_from_json(const nlohmann::json& j) {
  return {j.at("object_label").get<std::string>(), j.at("cloud_path").get<std::string>(),
          ShapeFeature{feature_kind_from_string(j.at("feature_kind").get<std::string>()),
                       j.at("feature").get<std::vector<double>>()}};
}

inline AbortRecord abort_from_json(const nlohmann::json& j) {
  return {j.at("run_id").get<std::string>(), j.at("reason").get<std::string>(),
          j.at("timestamp").get<std::string>()};
}

// Exclusive advisory lock on <root>/.lock, released on destruction.
class WriterLock {
 public:
  explicit WriterLock(const std::filesystem::path& root) {
    const auto path = root / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw std::runtime_error("memory: cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw std::runtime_error("memory: store " + root.string() + " is locked by another writer");
    }
  }
  WriterLock(const WriterLock&) = delete;
  WriterLock& operator=(const WriterLock&) = delete;
  WriterLock(WriterLock&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  WriterLock& operator=(WriterLock&& o) noexcept {
    if (this != &o) {
      release();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~WriterLock() { release(); }

 private:
  void release() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
      fd_ = -1;
    }
  }
  int fd_ = -1;
};

}  // namespace detail

// Episodic, procedural and semantic memories backed by append-only JSON-Lines
// files under one directory. One writer at a time; readers take no lock.
class MemoryStore {
 public:
  enum class Mode { ReadOnly, ReadWrite };

  static constexpr const char* kEpisodicFile = "episodic.jsonl";
  static constexpr const char* kProceduralFile = "procedural.jsonl";
  static constexpr const char* kSemanticFile = "semantic.jsonl";
  static constexpr const char* kCloudDir = "clouds";

  explicit MemoryStore(std::filesystem::path root, Mode mode = Mode::ReadWrite)
      : root_(std::move(root)), mode_(mode) {
    namespace fs = std::filesystem;
    if (mode_ == Mode::ReadWrite) {
      fs::create_directories(root_ / kCloudDir);
      lock_.emplace(root_);
    } else if (!fs::is_directory(root_)) {
      throw std::runtime_error("memory: no store at " + root_.string());
    }
    load();
  }

  const std::filesystem::path& root() const { return root_; }

  void append_episode(const EpisodicRecord& rec) {
    require_writer();
    const auto key = std::make_tuple(rec.run_id, rec.iteration, rec.phase);
    if (episode_keys_.count(key))
      throw std::invalid_argument("memory: duplicate episode (" + rec.run_id + ", " +
                                  std::to_string(rec.iteration) + ", " + to_string(rec.phase) + ")");
    append_line(kEpisodicFile, detail::to_json(rec));
    episode_keys_.insert(key);
    episodes_.push_back(rec);
  }

  void store_strategy(const ProceduralRecord& rec) {
    require_writer();
    if (strategy_keys_.count(rec.run_id))
      throw std::invalid_argument("memory: strategy for run '" + rec.run_id + "' already stored");
    append_line(kProceduralFile, detail::to_json(rec));
    strategy_keys_.insert(rec.run_id);
    strategies_.push_back(rec);
  }

  void mark_aborted(const std::string& run_id, const std::string& reason) {
    require_writer();
    AbortRecord rec{run_id, reason, clock_()};
    append_line(kEpisodicFile, detail::to_json(rec));
    aborts_.push_back(std::move(rec));
  }

  void add_object(const std::string& label, const PointCloud& cloud, const ShapeFeature& feature) {
    require_writer();
    check_label(label);
    if (find_object(label)) throw std::invalid_argument("memory: object '" + label + "' already exists");
    feature.check();
    const std::string rel = std::string(kCloudDir) + "/" + label + ".xyz";
    write_cloud(cloud, (root_ / rel).string());
    SemanticRecord rec{label, rel, feature};
    append_line(kSemanticFile, detail::to_json(rec));
    objects_.push_back(std::move(rec));
  }

  const std::vector<EpisodicRecord>& episodes() const { return episodes_; }
  const std::vector<ProceduralRecord>& strategies() const { return strategies_; }
  const std::vector<SemanticRecord>& objects() const { return objects_; }
  const std::vector<AbortRecord>& aborts() const { return aborts_; }

  std::vector<EpisodicRecord> episodes_for_run(const std::string& run_id) const {
    std::vector<EpisodicRecord> out;
    for (const auto& e : episodes_)
      if (e.run_id == run_id) out.push_back(e);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.iteration < b.iteration;
    });
    return out;
  }

  std::vector<std::string> run_ids() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& e : episodes_)
      if (seen.insert(e.run_id).second) out.push_back(e.run_id);
    return out;
  }

  // Strategies for an object, best first: final_median, then final_mean
  // (both descending), then run_id.
  std::vector<ProceduralRecord> strategies_ranked(const std::string& label) const {
    std::vector<ProceduralRecord> out;
    for (const auto& s : strategies_)
      if (s.object_label == label) out.push_back(s);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.final_median != b.final_median) return a.final_median > b.final_median;
      if (a.final_mean != b.final_mean) return a.final_mean > b.final_mean;
      return a.run_id < b.run_id;
    });
    return out;
  }

  // Up to `limit` best parameter sets from distinct runs on `label`.
  std::vector<ParamVector> strategies_for(const std::string& label, std::size_t limit) const {
    if (limit < 1) throw std::invalid_argument("strategies_for: limit must be >= 1");
    std::vector<ParamVector> out;
    std::set<std::string> runs;
    for (const auto& s : strategies_ranked(label)) {
      if (out.size() >= limit) break;
      if (runs.insert(s.run_id).second) out.push_back(s.best_params_unit);
    }
    return out;
  }

  std::vector<std::string> list_objects() const {
    std::vector<std::string> out;
    for (const auto& o : objects_) out.push_back(o.object_label);
    return out;
  }

  const SemanticRecord* find_object(const std::string& label) const {
    for (const auto& o : objects_)
      if (o.object_label == label) return &o;
    return nullptr;
  }

  PointCloud object_cloud(const std::string& label) const {
    const auto* rec = find_object(label);
    if (!rec) throw std::invalid_argument("memory: unknown object '" + label + "'");
    return load_cloud((root_ / rec->cloud_path).string());
  }

  std::vector<LabeledFeature> features(FeatureKind kind) const {
    std::vector<LabeledFeature> out;
    for (const auto& o : objects_)
      if (o.feature.kind == kind) out.push_back({o.object_label, o.feature});
    return out;
  }

  // Timestamp source for new records.
  void set_clock(std::function<std::string()> clock) { clock_ = std::move(clock); }
  std::string now() const { return clock_(); }

 private:
  static void check_label(const std::string& label) {
    if (label.empty() || label == "." || label == ".." ||
        label.find_first_of("/\\\n\r\t ") != std::string::npos)
      throw std::invalid_argument("memory: invalid object label '" + label + "'");
  }

  void require_writer() const {
    if (mode_ != Mode::ReadWrite) throw std::logic_error("memory: store opened read-only");
  }

  void append_line(const char* file, const nlohmann::json& j) {
    std::ofstream out(root_ / file, std::ios::app);
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw std::runtime_error("memory: write failed for " + (root_ / file).string());
  }

  template <typename F>
  void read_lines(const char* file, F&& on_record) {
    std::ifstream in(root_ / file);
    if (!in) return;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("memory: " + std::string(file) + ":" + std::to_string(n) + ": " + e.what());
      }
      if (j.value("v", 0) != detail::kSchemaVersion)
        throw std::runtime_error("memory: " + std::string(file) + ":" + std::to_string(n) +
                                 ": unsupported schema version");
      on_record(j);
    }
  }

  void load() {
    read_lines(kEpisodicFile, [&](const nlohmann::json& j) {
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "episode") {
        auto rec = detail::episode_from_json(j);
        episode_keys_.insert(std::make_tuple(rec.run_id, rec.iteration, rec.phase));
        episodes_.push_back(std::move(rec));
      } else if (kind == "abort") {
        aborts_.push_back(detail::abort_from_json(j));
      }
    });
    read_lines(kProceduralFile, [&](const nlohmann::json& j) {
      auto rec = detail::strategy_from_json(j);
      strategy_keys_.insert(rec.run_id);
      strategies_.push_back(std::move(rec));
    });
    read_lines(kSemanticFile, [&](const nlohmann::json& j) { objects_.push_back(detail::object_from_json(j)); });
  }

  std::filesystem::path root_;
  Mode mode_;
  std::optional<detail::WriterLock> lock_;
  std::function<std::string()> clock_ = utc_timestamp;

  std::vector<EpisodicRecord> episodes_;
  std::vector<ProceduralRecord> strategies_;
  std::vector<SemanticRecord> objects_;
  std::vector<AbortRecord> aborts_;
  std::set<std::tuple<std::string, std::size_t, Phase>> episode_keys_;
  std::set<std::string> strategy_keys_;
};

}  // namespace devbo
