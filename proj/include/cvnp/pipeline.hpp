#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvnp/ccore.hpp"
#include "cvnp/mine.hpp"
#include "cvnp/puiseux.hpp"
#include "cvnp/surrogate.hpp"

namespace cvnp {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

/// Flat key = value configuration. Keys mirror the defaults table.
struct PipelineConfig {
  std::uint64_t seed = 42;
  int n_per_class = 2000;
  double train_frac = 0.8;
  int hidden = 16;
  int epochs = 50;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double tau = 0.0;
  double delta = 0.1;
  int review_budget = 80;
  int degree = 4;
  double radius = 0.05;
  int n_fit = 600;
  int n_eval = 200;
  double kink_eps = 1e-6;
  double ridge = 1e-8;
  double cond_max = 1e10;
  double min_keep_ratio = 0.25;
  bool weight_by_distance = true;
  int kink_draws = 2000;
  std::string puiseux_threshold = "4";
  double ray_radius = 0.02;
  int ray_steps = 20;
  int n_random_dirs = 20;
  int branch_phase_steps = 8;
  int ece_bins = 15;
  int reliability_bins = 10;
  int folds = 5;
  double gamma = 0.5;
  int max_anchors = 0;  // 0 analyses every flagged anchor
  int workers = 1;

  /// Sets one key from its text form. Throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();
  /// key = value lines in key order.
  std::string to_text() const;
  Json to_json() const;
  void validate() const;

  TrainConfig train_config() const;
  SurrogateConfig surrogate_config(std::uint64_t anchor_seed) const;
  Rational threshold() const;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage could not find an artifact produced by an earlier stage.
class StageError : public Error {
 public:
  using Error::Error;
};

/// Parses "key = value" lines; '#' starts a comment.
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});

// Artifact I/O -------------------------------------------------------------

void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

Json model_to_json(const ModelParams& params, const TrainConfig& cfg, double train_accuracy);
ModelParams model_from_json(const Json& j);

Json branches_to_json(const std::vector<PuiseuxBranch>& branches);
std::vector<PuiseuxBranch> branches_from_json(const Json& j);

void write_anchors(const std::filesystem::path& path, const std::vector<AnchorRecord>& anchors);
std::vector<AnchorRecord> read_anchors(const std::filesystem::path& path);

// Stages -------------------------------------------------------------------

struct StageTiming {
  std::int64_t anchor_id = 0;
  double sampling_ms = 0.0;
  double lstsq_ms = 0.0;
  double expand_ms = 0.0;
  double analyze_ms = 0.0;
};

void stage_gen(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_train(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_mine(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_analyze(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_probe(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_calibrate(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_report(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_bench(const PipelineConfig& cfg, const std::filesystem::path& out);

/// gen -> train -> mine -> analyze -> probe -> calibrate -> report -> bench.
void run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out);

/// Every deterministic artifact (CSV/JSON outside bench/), relative to `out`.
std::vector<std::filesystem::path> deterministic_artifacts(const std::filesystem::path& out);

/// Structural problems found in an artifact directory; empty when it conforms.
std::vector<std::string> check_artifacts(const std::filesystem::path& out);

}  // namespace cvnp
