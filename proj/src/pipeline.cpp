#include "cvnp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "cvnp/calib.hpp"
#include "cvnp/io.hpp"
#include "cvnp/probe.hpp"
#include "cvnp/stats.hpp"
#include "cvnp/synth.hpp"

namespace cvnp {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

const std::vector<std::string> kDataHeader{"id", "re1", "re2", "im1", "im2", "label"};
const std::vector<std::string> kAnchorsHeader{"id",  "re1", "re2",   "im1",    "im2",        "y_true",
                                              "p0",  "p1",  "p_max", "margin", "flag_reason"};
const std::vector<std::string> kSensHeader{"tau",       "delta",       "abstain",
                                           "capture",   "precision",   "risk_accept",
                                           "dispersion", "kink_benefit", "n_flagged"};
const std::vector<std::string> kAnalysisHeader{
    "anchor_id", "status", "degree_used", "radius_used", "cond_A",        "rank_A",
    "kept_ratio", "num_branches", "m",   "r_dom",       "rmse",          "mae",
    "pearson",   "sign_agreement", "kink_sd"};
const std::vector<std::string> kRobustnessHeader{"direction_source", "dir1", "dir2",
                                                 "dir3", "dir4", "flip_radius"};
const std::vector<std::string> kTriageHeader{
    "anchor_id", "abs_c4", "grad_norm", "inv_r_grad", "r_dom", "fragile",
    "min_flip_branch", "min_flip_random", "min_flip_gradient"};
const std::vector<std::string> kPrHeader{"threshold", "precision", "recall"};
const std::vector<std::string> kTriageSummaryHeader{"score", "auprc", "prevalence", "degenerate"};
const std::vector<std::string> kFoldsHeader{"fold", "method", "ece", "nll", "brier", "n_eval", "params"};
const std::vector<std::string> kReliabilityHeader{"bin_low", "bin_high", "mean_conf", "accuracy", "count"};
const std::vector<std::string> kMisestimationHeader{"eps", "t_mult", "ece_all", "ece_anchors"};
const std::vector<std::string> kStatsHeader{"method", "metric", "mean", "ci_half", "p_vs_none", "wins", "folds"};
const std::vector<std::string> kAnalyzeTimingHeader{"anchor_id", "sampling_ms", "lstsq_ms", "expand_ms", "analyze_ms"};
const std::vector<std::string> kProbeTimingHeader{"anchor_id", "probe_ms", "saliency_ms"};
const std::vector<std::string> kBenchHeader{"stage", "median_ms", "q1_ms", "q3_ms", "n"};

const std::vector<TriageScore> kScores{TriageScore::abs_c4, TriageScore::grad_norm,
                                       TriageScore::inv_r_grad, TriageScore::inv_r_dom};

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::int64_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(std::optional<double> v) { return v ? format_double(*v) : "none"; }

// --- config fields --------------------------------------------------------

template <class T>
void assign(T& dst, const std::string& text) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if constexpr (std::is_same_v<T, double>) {
    dst = parse_double(text);
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw ConfigError("invalid integer '" + text + "'");
    dst = v;
  }
}
void assign(bool& dst, const std::string& text) {
  if (text == "true" || text == "1") dst = true;
  else if (text == "false" || text == "0") dst = false;
  else throw ConfigError("invalid boolean '" + text + "'");
}
void assign(std::string& dst, const std::string& text) { dst = text; }

std::string show(double v) { return format_double(v); }
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define CVNP_FIELD(name)                                                             \
  Field {                                                                            \
    #name, [](PipelineConfig& c, const std::string& v) { assign(c.name, v); },       \
        [](const PipelineConfig& c) { return show(c.name); }                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f{
      CVNP_FIELD(seed),          CVNP_FIELD(n_per_class),      CVNP_FIELD(train_frac),
      CVNP_FIELD(hidden),        CVNP_FIELD(epochs),           CVNP_FIELD(batch_size),
      CVNP_FIELD(lr),            CVNP_FIELD(weight_decay),     CVNP_FIELD(tau),
      CVNP_FIELD(delta),         CVNP_FIELD(review_budget),    CVNP_FIELD(degree),
      CVNP_FIELD(radius),        CVNP_FIELD(n_fit),            CVNP_FIELD(n_eval),
      CVNP_FIELD(kink_eps),      CVNP_FIELD(ridge),            CVNP_FIELD(cond_max),
      CVNP_FIELD(min_keep_ratio), CVNP_FIELD(weight_by_distance), CVNP_FIELD(kink_draws),
      CVNP_FIELD(puiseux_threshold), CVNP_FIELD(ray_radius),   CVNP_FIELD(ray_steps),
      CVNP_FIELD(n_random_dirs), CVNP_FIELD(branch_phase_steps), CVNP_FIELD(ece_bins),
      CVNP_FIELD(reliability_bins), CVNP_FIELD(folds),         CVNP_FIELD(gamma),
      CVNP_FIELD(max_anchors),   CVNP_FIELD(workers),
  };
  return f;
}

#undef CVNP_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// --- artifact helpers -----------------------------------------------------

void require(const fs::path& path, const std::string& stage, const std::string& producer) {
  if (!fs::exists(path)) {
    throw StageError("stage '" + stage + "' needs " + path.string() + "; run '" + producer +
                     "' first");
  }
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw Error("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

double json_real(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

fs::path anchor_json_path(const fs::path& out, std::int64_t id) {
  return out / "anchors" / ("anchor_" + std::to_string(id) + ".json");
}

ModelParams load_model(const fs::path& out, const std::string& stage) {
  require(out / "model.json", stage, "train");
  return model_from_json(read_json(out / "model.json"));
}

Dataset load_split(const fs::path& out, const std::string& name, const std::string& stage) {
  const fs::path p = out / "data" / (name + ".csv");
  require(p, stage, "gen");
  return read_dataset(p);
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (const double x : v) a.push_back(x);
  return a;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::Map<const Eigen::ArrayXd> x(a.data(), static_cast<Eigen::Index>(a.size()));
  const Eigen::Map<const Eigen::ArrayXd> y(b.data(), static_cast<Eigen::Index>(b.size()));
  const Eigen::ArrayXd xc = x - x.mean(), yc = y - y.mean();
  const double d = std::sqrt(xc.square().sum() * yc.square().sum());
  return d > 0.0 ? (xc * yc).sum() / d : std::numeric_limits<double>::quiet_NaN();
}

// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(workers, static_cast<int>(n)); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// --- analysis -------------------------------------------------------------

struct AnchorResult {
  AnchorRecord anchor;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string error;
  std::optional<SurrogateFit> fit;
  std::vector<FitAttempt> attempts;
  KinkScore kink;
  std::vector<PuiseuxBranch> branches;
  BranchSummary summary;
  DominantRatio dom;
  StageTiming timing;
};

AnchorResult analyze_anchor(const ModelParams& params, const AnchorRecord& a,
                            const PipelineConfig& cfg) {
  const auto t0 = Clock::now();
  AnchorResult r;
  r.anchor = a;
  r.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(a.id));
  r.timing.anchor_id = a.id;
  const LocalFunction target = network_target(params);
  try {
    r.fit = fit_surrogate(target, a.x, cfg.surrogate_config(r.seed));
    r.attempts = r.fit->attempts;
    r.timing.sampling_ms = r.fit->time_sampling_ms;
    r.timing.lstsq_ms = r.fit->time_lstsq_ms;
  } catch (const UnfittableAnchor& e) {
    r.status = "unfittable";
    r.error = e.what();
    r.attempts = e.attempts();
  }
  const double kink_radius = r.fit ? r.fit->radius_used : cfg.radius;
  r.kink = kink_prevalence(target, a.x, cfg.kink_draws, kink_radius, mix_seed(r.seed, 7));
  if (r.fit) {
    r.dom = dominant_ratio(*r.fit);
    const auto t1 = Clock::now();
    const SparsePoly2 poly = to_sparse_poly(*r.fit);
    if (poly.empty()) {
      r.status = "zero_surrogate";
    } else {
      try {
        PuiseuxOptions po;
        po.threshold = cfg.threshold();
        r.branches = puiseux_expand(poly, po);
      } catch (const Error& e) {
        r.status = "expansion_failed";
        r.error = e.what();
      }
    }
    r.timing.expand_ms = ms_since(t1);
  }
  r.summary = branch_summary(r.branches);
  r.timing.analyze_ms = ms_since(t0);
  return r;
}

Json fidelity_json(const Fidelity& f) {
  return Json{{"available", f.available}, {"n", f.n},         {"rmse", f.rmse},
              {"mae", f.mae},             {"pearson", f.pearson}, {"sign_agreement", f.sign_agreement}};
}

Json attempts_json(const std::vector<FitAttempt>& attempts) {
  Json a = Json::array();
  for (const auto& t : attempts) {
    a.push_back({{"degree", t.degree},
                 {"radius", t.radius},
                 {"kept_ratio", t.kept_ratio},
                 {"cond", t.cond},
                 {"rank", t.rank},
                 {"outcome", t.outcome}});
  }
  return a;
}

Json anchor_record_json(const AnchorRecord& a) {
  return Json{{"id", a.id},
              {"x", vec_json(a.x)},
              {"y_true", a.y_true},
              {"probs", vec_json(a.probs)},
              {"p_max", a.p_max},
              {"margin", a.margin},
              {"flag_reason", std::string(to_string(a.flag_reason))}};
}

Json anchor_json(const AnchorResult& r, const PipelineConfig& cfg) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "anchor_report";
  j["anchor"] = anchor_record_json(r.anchor);
  j["seed"] = r.seed;
  j["status"] = r.status;
  j["error"] = r.error;
  Json fit = nullptr;
  if (r.fit) {
    Json coeffs = Json::array();
    for (std::size_t k = 0; k < r.fit->basis.size(); ++k) {
      const auto c = r.fit->coeffs[static_cast<Eigen::Index>(k)];
      coeffs.push_back({{"i", r.fit->basis[k].i}, {"j", r.fit->basis[k].j}, {"re", c.real()}, {"im", c.imag()}});
    }
    fit = Json{{"coeffs", coeffs},
               {"degree_used", r.fit->degree_used},
               {"radius_used", r.fit->radius_used},
               {"cond_A", r.fit->cond_A},
               {"rank_A", r.fit->rank_A},
               {"kept_ratio", r.fit->kept_ratio},
               {"n_kept", r.fit->n_kept},
               {"fidelity", fidelity_json(r.fit->fidelity)}};
  }
  j["fit"] = fit;
  j["attempts"] = attempts_json(r.attempts);
  j["kink_score"] = {{"angular_sd", r.kink.angular_sd},
                     {"n_used", r.kink.n_used},
                     {"degenerate", r.kink.degenerate}};
  j["branches"] = branches_to_json(r.branches);
  j["num_branches"] = r.summary.num_branches;
  j["m"] = r.summary.m;
  j["dominant_ratio"] = r.fit ? Json(r.dom.dr) : Json(nullptr);
  j["r_dom"] = r.fit ? Json(r.dom.r_dom) : Json(nullptr);
  j["dominant_degenerate"] = r.dom.degenerate;
  j["config"] = {{"degree", cfg.degree},
                 {"radius", cfg.radius},
                 {"n_fit", cfg.n_fit},
                 {"n_eval", cfg.n_eval},
                 {"kink_eps", cfg.kink_eps},
                 {"ridge", cfg.ridge},
                 {"cond_max", cfg.cond_max},
                 {"min_keep_ratio", cfg.min_keep_ratio},
                 {"weight_by_distance", cfg.weight_by_distance},
                 {"puiseux_threshold", cfg.puiseux_threshold}};
  return j;
}

// --- calibration ----------------------------------------------------------

struct Predictions {
  Eigen::MatrixXd probs;  // N x 2
};

struct CalibSample {
  Eigen::VectorXd logits;
  double f = 0.0;
  int label = 0;
  int m = 0;  // 0 when not an analysed anchor
  bool anchor = false;
};

Eigen::Vector2d binary_probs(double p0) { return {p0, 1.0 - p0}; }

struct FoldOutcome {
  CalibMethod method;
  std::vector<std::size_t> idx;
  Eigen::MatrixXd probs;
  std::string params;
};

// Fits every method on `fit_idx` and predicts `eval_idx`. t_mult scales the
// phase-aware temperature on anchors.
std::vector<FoldOutcome> calibrate_fold(const std::vector<CalibSample>& s,
                                        const std::vector<std::size_t>& fit_idx,
                                        const std::vector<std::size_t>& eval_idx,
                                        double gamma, double t_mult) {
  Eigen::MatrixXd fit_logits(static_cast<Eigen::Index>(fit_idx.size()), 2);
  std::vector<int> fit_labels, fit_targets;
  std::vector<double> fit_scores, fit_targets_d;
  for (std::size_t k = 0; k < fit_idx.size(); ++k) {
    const auto& c = s[fit_idx[k]];
    fit_logits.row(static_cast<Eigen::Index>(k)) = c.logits.transpose();
    fit_labels.push_back(c.label);
    fit_scores.push_back(c.f);
    fit_targets.push_back(c.label == 0);
    fit_targets_d.push_back(c.label == 0 ? 1.0 : 0.0);
  }
  const TemperatureFit tf = fit_temperature(fit_logits, fit_labels);
  const PlattFit pf = fit_platt(fit_scores, fit_targets);
  const IsotonicFit iso = fit_isotonic(fit_scores, fit_targets_d);

  std::vector<FoldOutcome> out;
  for (const CalibMethod method : all_calib_methods()) {
    FoldOutcome fo{method, eval_idx, Eigen::MatrixXd(static_cast<Eigen::Index>(eval_idx.size()), 2), ""};
    for (std::size_t k = 0; k < eval_idx.size(); ++k) {
      const auto& c = s[eval_idx[k]];
      Eigen::Vector2d p;
      switch (method) {
        case CalibMethod::none: p = softmax_temp(c.logits, 1.0); break;
        case CalibMethod::temperature: p = softmax_temp(c.logits, tf.T); break;
        case CalibMethod::platt: p = binary_probs(sigmoid(pf.a * c.f + pf.b)); break;
        case CalibMethod::isotonic: p = binary_probs(iso(c.f)); break;
        case CalibMethod::phase_aware: {
          const double T = c.m >= 1 ? phase_aware_T(tf.T, c.m, gamma) * t_mult : tf.T;
          p = softmax_temp(c.logits, T);
          break;
        }
      }
      fo.probs.row(static_cast<Eigen::Index>(k)) = p.transpose();
    }
    switch (method) {
      case CalibMethod::none: fo.params = "T=1"; break;
      case CalibMethod::temperature: fo.params = "T=" + fmt(tf.T); break;
      case CalibMethod::platt: fo.params = "a=" + fmt(pf.a) + ";b=" + fmt(pf.b); break;
      case CalibMethod::isotonic: fo.params = "blocks=" + fmt(iso.value.size()); break;
      case CalibMethod::phase_aware:
        fo.params = "T_base=" + fmt(tf.T) + ";gamma=" + fmt(gamma);
        break;
    }
    out.push_back(std::move(fo));
  }
  return out;
}

struct ConfCorrect {
  std::vector<double> conf;
  std::vector<int> correct;
};

ConfCorrect conf_correct(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  ConfCorrect cc;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int pred = probs(i, 0) >= probs(i, 1) ? 0 : 1;
    cc.conf.push_back(probs(i, pred));
    cc.correct.push_back(pred == labels[static_cast<std::size_t>(i)]);
  }
  return cc;
}

std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0xCA11B));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  std::vector<int> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  return fold;
}

struct BenchRow {
  std::string stage;
  std::vector<double> values;
};

}  // namespace

// --- PipelineConfig -------------------------------------------------------

void PipelineConfig::set(const std::string& key, const std::string& value) {
  try {
    field(key).set(*this, trim(value));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string PipelineConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return k;
}

std::string PipelineConfig::to_text() const {
  std::string s;
  for (const auto& f : fields()) s += f.key + " = " + f.get(*this) + "\n";
  return s;
}

Json PipelineConfig::to_json() const {
  Json j;
  for (const auto& f : fields()) {
    if (f.key != "workers") j[f.key] = f.get(*this);
  }
  return j;
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  check(n_per_class >= 1, "n_per_class must be >= 1");
  check(train_frac > 0.0 && train_frac < 1.0, "train_frac must be in (0, 1)");
  check(hidden >= 1, "hidden must be >= 1");
  check(epochs >= 1 && batch_size >= 1, "epochs and batch_size must be >= 1");
  check(lr > 0.0 && weight_decay >= 0.0, "lr must be > 0 and weight_decay >= 0");
  check(tau >= 0.0 && tau <= 1.0 && delta >= 0.0 && delta <= 1.0, "tau, delta must be in [0, 1]");
  check(review_budget >= 0, "review_budget must be >= 0");
  check(degree >= 2 && degree <= 5, "degree must be in [2, 5]");
  check(radius > 0.0 && n_fit >= 1 && n_eval >= 0, "bad surrogate sampling settings");
  check(ridge >= 0.0 && cond_max > 0.0, "ridge must be >= 0 and cond_max > 0");
  check(min_keep_ratio > 0.0 && min_keep_ratio <= 1.0, "min_keep_ratio must be in (0, 1]");
  check(kink_draws >= 2, "kink_draws must be >= 2");
  check(threshold() > Rational(0), "puiseux_threshold must be > 0");
  check(ray_radius > 0.0 && ray_steps >= 2, "ray_radius must be > 0 and ray_steps >= 2");
  check(n_random_dirs >= 0 && branch_phase_steps >= 1, "bad direction counts");
  check(ece_bins >= 1 && reliability_bins >= 1, "bin counts must be >= 1");
  check(folds >= 2, "folds must be >= 2");
  check(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
  check(max_anchors >= 0 && workers >= 1, "max_anchors must be >= 0 and workers >= 1");
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t;
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.seed = seed;
  t.hidden_width = hidden;
  return t;
}

SurrogateConfig PipelineConfig::surrogate_config(std::uint64_t anchor_seed) const {
  SurrogateConfig s;
  s.degree = degree;
  s.radius = radius;
  s.n_fit = n_fit;
  s.n_eval = n_eval;
  s.kink_eps = kink_eps;
  s.ridge = ridge;
  s.weight_by_distance = weight_by_distance;
  s.min_keep_ratio = min_keep_ratio;
  s.cond_max = cond_max;
  s.seed = anchor_seed;
  return s;
}

Rational PipelineConfig::threshold() const {
  try {
    return parse_rational(puiseux_threshold);
  } catch (const Error&) {
    throw ConfigError("puiseux_threshold: expected p or p/q, got '" + puiseux_threshold + "'");
  }
}

PipelineConfig parse_config(const std::string& text, PipelineConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

// --- artifact I/O ---------------------------------------------------------

void write_dataset(const fs::path& path, const Dataset& data) {
  CsvWriter w(kDataHeader);
  for (const auto& s : data) {
    w.row({fmt(s.id), fmt(s.x[0]), fmt(s.x[1]), fmt(s.x[2]), fmt(s.x[3]), fmt(s.label)});
  }
  w.save(path);
}

Dataset read_dataset(const fs::path& path) {
  const CsvTable t = read_csv(path);
  Dataset d;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Sample s;
    s.id = std::stoll(t.at(r, "id"));
    s.x = {parse_double(t.at(r, "re1")), parse_double(t.at(r, "re2")),
           parse_double(t.at(r, "im1")), parse_double(t.at(r, "im2"))};
    s.label = std::stoi(t.at(r, "label"));
    d.push_back(s);
  }
  return d;
}

Json model_to_json(const ModelParams& params, const TrainConfig& cfg, double train_accuracy) {
  auto flat = [](const Eigen::MatrixXd& re, const Eigen::MatrixXd& im) {
    Json a = Json::array();
    for (const auto* m : {&re, &im})
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) a.push_back((*m)(r, c));
    return a;
  };
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "model";
  j["seed"] = cfg.seed;
  j["hidden_width"] = params.hidden_width();
  j["num_classes"] = params.num_classes();
  j["eps_logit"] = params.eps_logit;
  j["hyperparameters"] = {{"lr", cfg.lr},
                          {"beta1", cfg.beta1},
                          {"beta2", cfg.beta2},
                          {"adam_eps", cfg.adam_eps},
                          {"weight_decay", cfg.weight_decay},
                          {"epochs", cfg.epochs},
                          {"batch_size", cfg.batch_size}};
  j["train_accuracy"] = train_accuracy;
  j["W1"] = flat(params.w1_re, params.w1_im);
  j["b1"] = vec_json(params.b1);
  j["W2"] = flat(params.w2_re, params.w2_im);
  return j;
}

ModelParams model_from_json(const Json& j) {
  try {
    const int h = j.at("hidden_width").get<int>();
    const int k = j.at("num_classes").get<int>();
    ModelParams p = ModelParams::zeros(h, k, j.at("eps_logit").get<double>());
    auto fill = [](const Json& a, Eigen::MatrixXd& re, Eigen::MatrixXd& im) {
      if (a.size() != static_cast<std::size_t>(2 * re.size())) throw ContractError("weight array size");
      std::size_t n = 0;
      for (auto* m : {&re, &im})
        for (Eigen::Index r = 0; r < m->rows(); ++r)
          for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(r, c) = a[n++].get<double>();
    };
    fill(j.at("W1"), p.w1_re, p.w1_im);
    fill(j.at("W2"), p.w2_re, p.w2_im);
    const Json& b = j.at("b1");
    if (b.size() != static_cast<std::size_t>(h)) throw ContractError("b1 size");
    for (int i = 0; i < h; ++i) p.b1[i] = b[static_cast<std::size_t>(i)].get<double>();
    p.validate();
    return p;
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed model json: ") + e.what());
  }
}

Json branches_to_json(const std::vector<PuiseuxBranch>& branches) {
  Json a = Json::array();
  for (const auto& b : branches) {
    Json terms = Json::array();
    for (const auto& t : b.terms) {
      terms.push_back({{"exp_num", t.exponent.num()},
                       {"exp_den", t.exponent.den()},
                       {"re", t.coeff.real()},
                       {"im", t.coeff.imag()}});
    }
    a.push_back({{"terms", terms}, {"multiplicity", b.multiplicity}, {"orientation_rad", b.orientation}});
  }
  return a;
}

std::vector<PuiseuxBranch> branches_from_json(const Json& j) {
  std::vector<PuiseuxBranch> out;
  for (const auto& bj : j) {
    PuiseuxBranch b;
    for (const auto& t : bj.at("terms")) {
      b.terms.push_back({Rational(t.at("exp_num").get<std::int64_t>(), t.at("exp_den").get<std::int64_t>()),
                         {t.at("re").get<double>(), t.at("im").get<double>()}});
    }
    b.multiplicity = bj.at("multiplicity").get<int>();
    b.orientation = bj.at("orientation_rad").get<double>();
    out.push_back(std::move(b));
  }
  return out;
}

void write_anchors(const fs::path& path, const std::vector<AnchorRecord>& anchors) {
  CsvWriter w(kAnchorsHeader);
  for (const auto& a : anchors) {
    w.row({fmt(a.id), fmt(a.x[0]), fmt(a.x[1]), fmt(a.x[2]), fmt(a.x[3]), fmt(a.y_true),
           fmt(a.probs[0]), fmt(a.probs[1]), fmt(a.p_max), fmt(a.margin),
           std::string(to_string(a.flag_reason))});
  }
  w.save(path);
}

std::vector<AnchorRecord> read_anchors(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<AnchorRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    AnchorRecord a;
    a.id = std::stoll(t.at(r, "id"));
    a.x = {parse_double(t.at(r, "re1")), parse_double(t.at(r, "re2")),
           parse_double(t.at(r, "im1")), parse_double(t.at(r, "im2"))};
    a.y_true = std::stoi(t.at(r, "y_true"));
    a.probs = Eigen::Vector2d(parse_double(t.at(r, "p0")), parse_double(t.at(r, "p1")));
    a.p_max = parse_double(t.at(r, "p_max"));
    a.margin = parse_double(t.at(r, "margin"));
    a.flag_reason = flag_reason_from_string(t.at(r, "flag_reason"));
    out.push_back(a);
  }
  return out;
}

// --- stages ---------------------------------------------------------------

void stage_gen(const PipelineConfig& cfg, const fs::path& out) {
  HelixParams p;
  p.n_per_class = cfg.n_per_class;
  p.seed = cfg.seed;
  p.train_frac = cfg.train_frac;
  const Split split = generate(p);
  write_dataset(out / "data" / "train.csv", split.train);
  write_dataset(out / "data" / "test.csv", split.test);
}

void stage_train(const PipelineConfig& cfg, const fs::path& out) {
  const Dataset train_set = load_split(out, "train", "train");
  const TrainConfig tc = cfg.train_config();
  const ModelParams params = train(train_set, tc);
  write_json(out / "model.json", model_to_json(params, tc, accuracy(params, train_set)));
}

void stage_mine(const PipelineConfig& cfg, const fs::path& out) {
  const ModelParams params = load_model(out, "mine");
  const Dataset test = load_split(out, "test", "mine");
  const auto scored = score_dataset(params, test, 1.0);
  const auto anchors = flag_uncertain(scored, cfg.tau, cfg.delta);
  write_anchors(out / "anchors.csv", anchors);

  const auto taus = default_tau_grid();
  const auto deltas = default_delta_grid();
  CsvWriter sens(kSensHeader);
  for (const auto& c : sensitivity_grid(scored, taus, deltas)) {
    sens.row({fmt(c.tau), fmt(c.delta), fmt(c.abstain), fmt(c.capture), fmt(c.precision),
              fmt(c.risk_accept), fmt(c.dispersion), fmt(c.kink_benefit), fmt(c.n_flagged)});
  }
  sens.save(out / "sens_grid.csv");

  const auto budget = select_budget(scored, static_cast<std::size_t>(cfg.review_budget));
  const auto at_budget = flag_uncertain(scored, budget.tau, budget.delta);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "mining";
  j["tau"] = cfg.tau;
  j["delta"] = cfg.delta;
  j["n_test"] = test.size();
  j["n_flagged"] = anchors.size();
  j["flagged_fraction"] = test.empty() ? 0.0 : static_cast<double>(anchors.size()) / static_cast<double>(test.size());
  j["test_accuracy"] = accuracy(params, test);
  j["budget"] = {{"review_budget", cfg.review_budget},
                 {"tau_star", budget.tau},
                 {"delta_star", budget.delta},
                 {"n_flagged", at_budget.size()}};
  write_json(out / "mining.json", j);
}

void stage_analyze(const PipelineConfig& cfg, const fs::path& out) {
  const ModelParams params = load_model(out, "analyze");
  require(out / "anchors.csv", "analyze", "mine");
  auto anchors = read_anchors(out / "anchors.csv");
  std::sort(anchors.begin(), anchors.end(),
            [](const AnchorRecord& a, const AnchorRecord& b) { return a.id < b.id; });
  if (cfg.max_anchors > 0 && anchors.size() > static_cast<std::size_t>(cfg.max_anchors)) {
    anchors.resize(static_cast<std::size_t>(cfg.max_anchors));
  }
  std::vector<AnchorResult> results(anchors.size());
  parallel_for(anchors.size(), cfg.workers,
               [&](std::size_t i) { results[i] = analyze_anchor(params, anchors[i], cfg); });

  fs::remove_all(out / "anchors");
  fs::create_directories(out / "anchors");
  CsvWriter index(kAnalysisHeader);
  CsvWriter timing(kAnalyzeTimingHeader);
  for (const auto& r : results) {
    write_json(anchor_json_path(out, r.anchor.id), anchor_json(r, cfg));
    const bool fitted = r.fit.has_value();
    const Fidelity fd = fitted ? r.fit->fidelity : Fidelity{};
    index.row({fmt(r.anchor.id), r.status, fitted ? fmt(r.fit->degree_used) : "",
               fitted ? fmt(r.fit->radius_used) : "", fitted ? fmt(r.fit->cond_A) : "",
               fitted ? fmt(r.fit->rank_A) : "", fitted ? fmt(r.fit->kept_ratio) : "",
               fmt(r.summary.num_branches), fmt(r.summary.m), fitted ? fmt(r.dom.r_dom) : "",
               fd.available ? fmt(fd.rmse) : "", fd.available ? fmt(fd.mae) : "",
               fd.available ? fmt(fd.pearson) : "", fd.available ? fmt(fd.sign_agreement) : "",
               fmt(r.kink.angular_sd)});
    timing.row({fmt(r.anchor.id), fmt(r.timing.sampling_ms), fmt(r.timing.lstsq_ms),
                fmt(r.timing.expand_ms), fmt(r.timing.analyze_ms)});
  }
  index.save(out / "analysis.csv");
  timing.save(out / "bench" / "analyze_timing.csv");
}

void stage_probe(const PipelineConfig& cfg, const fs::path& out) {
  const ModelParams params = load_model(out, "probe");
  require(out / "analysis.csv", "probe", "analyze");
  const CsvTable index = read_csv(out / "analysis.csv");

  struct ProbeOut {
    std::int64_t id = 0;
    bool ok = false;
    std::vector<RayProbe> rays;
    TriageRow row;
    std::optional<double> min_flip[3];
    double probe_ms = 0.0;
    double saliency_ms = 0.0;
  };
  std::vector<ProbeOut> results(index.rows.size());
  std::vector<Json> docs(index.rows.size());
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    results[r].id = std::stoll(index.at(r, "anchor_id"));
    results[r].ok = index.at(r, "status") == "ok";
    const fs::path p = anchor_json_path(out, results[r].id);
    require(p, "probe", "analyze");
    docs[r] = read_json(p);
  }

  parallel_for(results.size(), cfg.workers, [&](std::size_t r) {
    ProbeOut& po = results[r];
    if (!po.ok) return;
    const auto t0 = Clock::now();
    const Json& doc = docs[r];
    const Json& xj = doc.at("anchor").at("x");
    const CVec4 x(xj[0].get<double>(), xj[1].get<double>(), xj[2].get<double>(), xj[3].get<double>());
    const auto branches = branches_from_json(doc.at("branches"));
    const std::uint64_t seed = doc.at("seed").get<std::uint64_t>();
    po.rays = generate_directions(branches, cfg.n_random_dirs, mix_seed(seed, 11), cfg.branch_phase_steps);
    const Saliency sal = gradient_saliency(params, x);
    po.saliency_ms = sal.wall_ms;
    if (sal.grad_norm > 0.0) po.rays.push_back(gradient_direction(sal));
    for (auto& ray : po.rays) {
      ray.max_radius = cfg.ray_radius;
      ray.n_steps = cfg.ray_steps;
      ray.flip_radius = ray_flip_radius(params, x, ray.direction, cfg.ray_radius, cfg.ray_steps);
      if (ray.flip_radius) {
        auto& slot = po.min_flip[static_cast<int>(ray.source)];
        slot = slot ? std::min(*slot, *ray.flip_radius) : *ray.flip_radius;
      }
    }
    double abs_c4 = 0.0;
    for (const auto& c : doc.at("fit").at("coeffs")) {
      if (c.at("i").get<int>() + c.at("j").get<int>() == 4) {
        abs_c4 = std::max(abs_c4, std::abs(std::complex<double>(c.at("re").get<double>(), c.at("im").get<double>())));
      }
    }
    po.row.anchor_id = po.id;
    po.row.abs_c4 = abs_c4;
    po.row.grad_norm = sal.grad_norm;
    po.row.inv_r_grad = sal.value != 0.0 ? sal.grad_norm / std::abs(sal.value)
                                         : std::numeric_limits<double>::infinity();
    po.row.r_dom = json_real(doc.at("r_dom"));
    po.row.fragile = po.min_flip[0] || po.min_flip[1] || po.min_flip[2];
    po.probe_ms = ms_since(t0);
  });

  fs::remove_all(out / "robustness");
  fs::create_directories(out / "robustness");
  CsvWriter tri(kTriageHeader);
  CsvWriter timing(kProbeTimingHeader);
  std::vector<TriageRow> rows;
  for (const auto& po : results) {
    if (!po.ok) continue;
    CsvWriter rob(kRobustnessHeader);
    for (const auto& ray : po.rays) {
      rob.row({std::string(to_string(ray.source)), fmt(ray.direction[0]), fmt(ray.direction[1]),
               fmt(ray.direction[2]), fmt(ray.direction[3]), fmt(ray.flip_radius)});
    }
    rob.save(out / "robustness" / ("anchor_" + std::to_string(po.id) + ".csv"));
    tri.row({fmt(po.id), fmt(po.row.abs_c4), fmt(po.row.grad_norm), fmt(po.row.inv_r_grad),
             fmt(po.row.r_dom), po.row.fragile ? "1" : "0", fmt(po.min_flip[0]),
             fmt(po.min_flip[1]), fmt(po.min_flip[2])});
    timing.row({fmt(po.id), fmt(po.probe_ms), fmt(po.saliency_ms)});
    rows.push_back(po.row);
  }
  tri.save(out / "triage.csv");
  timing.save(out / "bench" / "probe_timing.csv");

  CsvWriter summary(kTriageSummaryHeader);
  for (const TriageScore s : kScores) {
    CsvWriter pr(kPrHeader);
    if (!rows.empty()) {
      const TriageResult res = triage(rows, s);
      for (const auto& pt : res.curve) pr.row({fmt(pt.threshold), fmt(pt.precision), fmt(pt.recall)});
      summary.row({std::string(to_string(s)), fmt(res.auprc), fmt(res.prevalence), res.degenerate ? "1" : "0"});
    } else {
      summary.row({std::string(to_string(s)), "nan", "nan", "1"});
    }
    pr.save(out / ("pr_" + std::string(to_string(s)) + ".csv"));
  }
  summary.save(out / "triage_summary.csv");
}

void stage_calibrate(const PipelineConfig& cfg, const fs::path& out) {
  const ModelParams params = load_model(out, "calibrate");
  Dataset test = load_split(out, "test", "calibrate");
  require(out / "analysis.csv", "calibrate", "analyze");
  std::sort(test.begin(), test.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });

  std::map<std::int64_t, int> mult;
  std::map<std::int64_t, bool> is_anchor;
  const CsvTable index = read_csv(out / "analysis.csv");
  for (std::size_t r = 0; r < index.rows.size(); ++r) {
    const auto id = std::stoll(index.at(r, "anchor_id"));
    is_anchor[id] = true;
    if (index.at(r, "status") == "ok") mult[id] = std::stoi(index.at(r, "m"));
  }

  std::vector<CalibSample> samples;
  std::vector<int> labels;
  for (const auto& s : test) {
    CalibSample c;
    c.logits = forward(params, s.x).logits;
    c.f = c.logits[0] - c.logits[1];
    c.label = s.label;
    c.anchor = is_anchor.contains(s.id);
    c.m = mult.contains(s.id) ? mult[s.id] : 0;
    samples.push_back(c);
    labels.push_back(s.label);
  }
  const auto fold = fold_assignment(samples.size(), cfg.folds, cfg.seed);

  // Out-of-fold predictions for one T_mult; also fills per-fold metrics.
  using MethodMetrics = std::map<CalibMethod, std::map<std::string, std::vector<double>>>;
  auto run_cv = [&](double t_mult, MethodMetrics* metrics, CsvWriter* folds_csv) {
    std::map<CalibMethod, Eigen::MatrixXd> oof;
    for (const CalibMethod m : all_calib_methods()) oof[m] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(samples.size()), 2);
    for (int f = 0; f < cfg.folds; ++f) {
      std::vector<std::size_t> fit_idx, eval_idx;
      for (std::size_t i = 0; i < samples.size(); ++i) (fold[i] == f ? eval_idx : fit_idx).push_back(i);
      std::vector<int> eval_labels;
      for (const auto i : eval_idx) eval_labels.push_back(labels[i]);
      for (const auto& fo : calibrate_fold(samples, fit_idx, eval_idx, cfg.gamma, t_mult)) {
        for (std::size_t k = 0; k < fo.idx.size(); ++k) {
          oof[fo.method].row(static_cast<Eigen::Index>(fo.idx[k])) = fo.probs.row(static_cast<Eigen::Index>(k));
        }
        if (!metrics) continue;
        const auto cc = conf_correct(fo.probs, eval_labels);
        const double e = ece(cc.conf, cc.correct, cfg.ece_bins);
        const ProperScores ps = proper_scores(fo.probs, eval_labels);
        (*metrics)[fo.method]["ece"].push_back(e);
        (*metrics)[fo.method]["nll"].push_back(ps.nll);
        (*metrics)[fo.method]["brier"].push_back(ps.brier);
        folds_csv->row({fmt(f), std::string(to_string(fo.method)), fmt(e), fmt(ps.nll), fmt(ps.brier),
                        fmt(eval_idx.size()), fo.params});
      }
    }
    return oof;
  };

  MethodMetrics metrics;
  CsvWriter folds_csv(kFoldsHeader);
  const auto oof = run_cv(1.0, &metrics, &folds_csv);
  folds_csv.save(out / "calibration_folds.csv");

  for (const CalibMethod m : all_calib_methods()) {
    const auto cc = conf_correct(oof.at(m), labels);
    CsvWriter rel(kReliabilityHeader);
    for (const auto& b : reliability_curve(cc.conf, cc.correct, cfg.reliability_bins)) {
      rel.row({fmt(b.bin_low), fmt(b.bin_high), fmt(b.mean_conf), fmt(b.accuracy), fmt(b.count)});
    }
    rel.save(out / ("reliability_" + std::string(to_string(m)) + ".csv"));
  }

  CsvWriter stats(kStatsHeader);
  for (const CalibMethod m : all_calib_methods()) {
    for (const std::string metric : {"ece", "nll", "brier"}) {
      const auto& v = metrics[m][metric];
      const auto& base = metrics[CalibMethod::none][metric];
      const ConfidenceInterval ci = t_confidence_interval(v);
      std::string p = "nan", wins = "nan";
      if (m != CalibMethod::none) {
        const WilcoxonResult w = wilcoxon_signed_rank(v, base, Alternative::less);
        p = fmt(w.p);
        wins = fmt(win_rate(v, base, true).wins);
      }
      stats.row({std::string(to_string(m)), metric, fmt(ci.mean), fmt(ci.half_width), p, wins,
                 fmt(cfg.folds)});
    }
  }
  stats.save(out / "stats.csv");

  CsvWriter mis(kMisestimationHeader);
  std::vector<std::size_t> anchor_idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].m >= 1) anchor_idx.push_back(i);
  }
  for (const auto& [eps, t_mult] : misestimation_sweep(default_eps_grid(), cfg.gamma)) {
    const auto probs = run_cv(t_mult, nullptr, nullptr).at(CalibMethod::phase_aware);
    const auto cc = conf_correct(probs, labels);
    std::string ece_anchor = "nan";
    if (!anchor_idx.empty()) {
      std::vector<double> c;
      std::vector<int> ok;
      for (const auto i : anchor_idx) {
        c.push_back(cc.conf[i]);
        ok.push_back(cc.correct[i]);
      }
      ece_anchor = fmt(ece(c, ok, cfg.ece_bins));
    }
    mis.row({fmt(eps), fmt(t_mult), fmt(ece(cc.conf, cc.correct, cfg.ece_bins)), ece_anchor});
  }
  mis.save(out / "misestimation.csv");
}

void stage_report(const PipelineConfig& cfg, const fs::path& out) {
  require(out / "model.json", "report", "train");
  require(out / "mining.json", "report", "mine");
  require(out / "analysis.csv", "report", "analyze");
  require(out / "triage.csv", "report", "probe");
  require(out / "stats.csv", "report", "calibrate");
  const Json model = read_json(out / "model.json");
  const Json mining = read_json(out / "mining.json");
  const CsvTable analysis = read_csv(out / "analysis.csv");
  const CsvTable triage_t = read_csv(out / "triage.csv");
  const CsvTable tri_sum = read_csv(out / "triage_summary.csv");
  const CsvTable stats = read_csv(out / "stats.csv");

  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "report";
  j["seed"] = cfg.seed;
  j["config"] = cfg.to_json();
  j["model"] = {{"train_accuracy", model.at("train_accuracy")},
                {"test_accuracy", mining.at("test_accuracy")}};
  j["mining"] = {{"tau", mining.at("tau")},
                 {"delta", mining.at("delta")},
                 {"n_test", mining.at("n_test")},
                 {"n_flagged", mining.at("n_flagged")},
                 {"flagged_fraction", mining.at("flagged_fraction")},
                 {"budget", mining.at("budget")}};

  std::map<std::string, int> status_counts;
  std::map<std::string, int> branch_hist;
  std::vector<double> rmse, mae, pr, sa, kink, cond;
  bool all_two = true;
  int fitted = 0;
  for (std::size_t r = 0; r < analysis.rows.size(); ++r) {
    const std::string st = analysis.at(r, "status");
    ++status_counts[st];
    if (st != "ok") continue;
    ++fitted;
    const std::string nb = analysis.at(r, "num_branches");
    ++branch_hist[nb];
    all_two = all_two && nb == "2";
    cond.push_back(parse_double(analysis.at(r, "cond_A")));
    kink.push_back(parse_double(analysis.at(r, "kink_sd")));
    if (!analysis.at(r, "rmse").empty()) {
      rmse.push_back(parse_double(analysis.at(r, "rmse")));
      mae.push_back(parse_double(analysis.at(r, "mae")));
      const double p = parse_double(analysis.at(r, "pearson"));
      if (std::isfinite(p)) pr.push_back(p);
      sa.push_back(parse_double(analysis.at(r, "sign_agreement")));
    }
  }
  Json hist = Json::object();
  for (const auto& [k, v] : branch_hist) hist[k] = v;
  Json statuses = Json::object();
  for (const auto& [k, v] : status_counts) statuses[k] = v;
  j["analysis"] = {{"n_anchors", analysis.rows.size()},
                   {"n_fitted", fitted},
                   {"status_counts", statuses},
                   {"branch_count_histogram", hist},
                   {"all_fitted_two_branches", fitted > 0 && all_two},
                   {"median_cond_A", quantile(cond, 0.5)},
                   {"median_rmse", quantile(rmse, 0.5)},
                   {"median_mae", quantile(mae, 0.5)},
                   {"median_pearson", quantile(pr, 0.5)},
                   {"median_sign_agreement", quantile(sa, 0.5)},
                   {"median_kink_sd", quantile(kink, 0.5)}};

  int fragile = 0;
  std::vector<double> rdom, flip;
  for (std::size_t r = 0; r < triage_t.rows.size(); ++r) {
    fragile += triage_t.at(r, "fragile") == "1";
    double best = std::numeric_limits<double>::infinity();
    for (const char* col : {"min_flip_branch", "min_flip_random", "min_flip_gradient"}) {
      if (triage_t.at(r, col) != "none") best = std::min(best, parse_double(triage_t.at(r, col)));
    }
    const double rd = parse_double(triage_t.at(r, "r_dom"));
    if (std::isfinite(best) && std::isfinite(rd)) {
      rdom.push_back(rd);
      flip.push_back(best);
    }
  }
  Json auprc = Json::object();
  for (std::size_t r = 0; r < tri_sum.rows.size(); ++r) {
    auprc[tri_sum.at(r, "score")] = parse_double(tri_sum.at(r, "auprc"));
  }
  j["probe"] = {{"n_probed", triage_t.rows.size()},
                {"n_fragile", fragile},
                {"auprc", auprc},
                {"r_dom_vs_flip_pearson", pearson(rdom, flip)},
                {"n_r_dom_vs_flip", rdom.size()}};

  Json calib = Json::object();
  for (std::size_t r = 0; r < stats.rows.size(); ++r) {
    calib[stats.at(r, "method")][stats.at(r, "metric")] = {
        {"mean", parse_double(stats.at(r, "mean"))},
        {"ci_half", parse_double(stats.at(r, "ci_half"))},
        {"p_vs_none", parse_double(stats.at(r, "p_vs_none"))}};
  }
  j["calibration"] = calib;
  write_json(out / "report.json", j);
}

void stage_bench(const PipelineConfig&, const fs::path& out) {
  require(out / "bench" / "analyze_timing.csv", "bench", "analyze");
  require(out / "bench" / "probe_timing.csv", "bench", "probe");
  const CsvTable a = read_csv(out / "bench" / "analyze_timing.csv");
  const CsvTable p = read_csv(out / "bench" / "probe_timing.csv");
  std::map<std::int64_t, double> probe_ms, saliency_ms;
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    const auto id = std::stoll(p.at(r, "anchor_id"));
    probe_ms[id] = parse_double(p.at(r, "probe_ms"));
    saliency_ms[id] = parse_double(p.at(r, "saliency_ms"));
  }
  std::vector<BenchRow> rows{{"sampling", {}}, {"lstsq", {}}, {"expand", {}}, {"probe", {}},
                             {"total", {}},    {"saliency", {}}};
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    const auto id = std::stoll(a.at(r, "anchor_id"));
    if (!probe_ms.contains(id)) continue;
    rows[0].values.push_back(parse_double(a.at(r, "sampling_ms")));
    rows[1].values.push_back(parse_double(a.at(r, "lstsq_ms")));
    rows[2].values.push_back(parse_double(a.at(r, "expand_ms")));
    rows[3].values.push_back(probe_ms[id]);
    rows[4].values.push_back(parse_double(a.at(r, "analyze_ms")) + probe_ms[id]);
    rows[5].values.push_back(saliency_ms[id]);
  }
  CsvWriter w(kBenchHeader);
  for (const auto& row : rows) {
    w.row({row.stage, fmt(quantile(row.values, 0.5)), fmt(quantile(row.values, 0.25)),
           fmt(quantile(row.values, 0.75)), fmt(row.values.size())});
  }
  const double ratio = quantile(rows[4].values, 0.5) / quantile(rows[5].values, 0.5);
  w.row({"ratio_total_over_saliency", fmt(ratio), "nan", "nan", fmt(rows[4].values.size())});
  w.save(out / "bench" / "benchmark.csv");
}

void run_pipeline(const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  stage_gen(cfg, out);
  stage_train(cfg, out);
  stage_mine(cfg, out);
  stage_analyze(cfg, out);
  stage_probe(cfg, out);
  stage_calibrate(cfg, out);
  stage_report(cfg, out);
  stage_bench(cfg, out);
}

std::vector<fs::path> deterministic_artifacts(const fs::path& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), out);
    if (*rel.begin() == "bench") continue;
    const auto ext = rel.extension();
    if (ext == ".csv" || ext == ".json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string> check_artifacts(const fs::path& out) {
  std::vector<std::string> problems;
  auto csv = [&](const fs::path& rel, const std::vector<std::string>& header) {
    const fs::path p = out / rel;
    if (!fs::exists(p)) {
      problems.push_back("missing " + rel.string());
      return;
    }
    try {
      const CsvTable t = read_csv(p);
      if (t.header != header) problems.push_back("bad header in " + rel.string());
      for (const auto& row : t.rows) {
        if (row.size() != header.size()) {
          problems.push_back("ragged row in " + rel.string());
          break;
        }
      }
    } catch (const std::exception& e) {
      problems.push_back(rel.string() + ": " + e.what());
    }
  };
  auto json = [&](const fs::path& rel, const std::string& kind,
                  const std::vector<std::string>& keys) -> std::optional<Json> {
    const fs::path p = out / rel;
    if (!fs::exists(p)) {
      problems.push_back("missing " + rel.string());
      return std::nullopt;
    }
    Json j;
    try {
      j = Json::parse(read_text(p));
    } catch (const std::exception& e) {
      problems.push_back(rel.string() + ": " + e.what());
      return std::nullopt;
    }
    if (j.value("schema_version", -1) != kSchemaVersion) problems.push_back("bad schema_version in " + rel.string());
    if (j.value("kind", std::string()) != kind) problems.push_back("bad kind in " + rel.string());
    for (const auto& k : keys) {
      if (!j.contains(k)) problems.push_back(rel.string() + " lacks '" + k + "'");
    }
    return j;
  };

  csv("data/train.csv", kDataHeader);
  csv("data/test.csv", kDataHeader);
  json("model.json", "model", {"seed", "hidden_width", "num_classes", "eps_logit", "hyperparameters", "W1", "b1", "W2"});
  csv("anchors.csv", kAnchorsHeader);
  csv("sens_grid.csv", kSensHeader);
  json("mining.json", "mining", {"tau", "delta", "n_test", "n_flagged", "flagged_fraction", "test_accuracy", "budget"});
  csv("analysis.csv", kAnalysisHeader);
  if (fs::exists(out / "analysis.csv")) {
    const CsvTable index = read_csv(out / "analysis.csv");
    for (std::size_t r = 0; r < index.rows.size(); ++r) {
      const std::string id = index.at(r, "anchor_id");
      const auto doc = json(fs::path("anchors") / ("anchor_" + id + ".json"), "anchor_report",
                            {"anchor", "seed", "status", "fit", "attempts", "kink_score", "branches",
                             "num_branches", "m", "r_dom", "config"});
      if (doc && doc->at("status") == "ok") {
        for (const auto& b : doc->at("branches")) {
          if (!b.contains("terms") || !b.contains("multiplicity") || !b.contains("orientation_rad")) {
            problems.push_back("anchor " + id + ": malformed branch");
          }
        }
        csv(fs::path("robustness") / ("anchor_" + id + ".csv"), kRobustnessHeader);
      }
    }
  }
  csv("triage.csv", kTriageHeader);
  csv("triage_summary.csv", kTriageSummaryHeader);
  for (const TriageScore s : kScores) csv("pr_" + std::string(to_string(s)) + ".csv", kPrHeader);
  csv("calibration_folds.csv", kFoldsHeader);
  for (const CalibMethod m : all_calib_methods()) {
    csv("reliability_" + std::string(to_string(m)) + ".csv", kReliabilityHeader);
  }
  csv("misestimation.csv", kMisestimationHeader);
  csv("stats.csv", kStatsHeader);
  json("report.json", "report", {"seed", "config", "model", "mining", "analysis", "probe", "calibration"});
  return problems;
}

}  // namespace cvnp
