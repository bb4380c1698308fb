// latseg command-line tool: generate, train, segment, benchmark, metrics.

#include <CLI11.hpp>

#include <map>
#include <set>
#include <type_traits>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "latseg/checkpoint.hpp"
#include "latseg/csv_io.hpp"
#include "latseg/datagen.hpp"
#include "latseg/json_io.hpp"
#include "latseg/pipeline.hpp"
#include "latseg/plot.hpp"
#include "latseg/train.hpp"

namespace fs = std::filesystem;
using namespace latseg;

namespace {

constexpr int exit_invalid = 2;
constexpr int exit_numerical = 3;
constexpr int exit_io = 4;
constexpr int report_version = 1;

// ---------------------------------------------------------------- settings

/// A flat key readable from the JSON config and overridable by a flag of
/// the same name (underscores or dashes).
class Keys {
 public:
  explicit Keys(CLI::App* app) : app_(app) {}

  template <class T>
  void add(const std::string& key, T& target, const std::string& help) {
    auto parsed = std::make_shared<T>(target);
    const std::string dashed = dash(key);
    const std::string names = dashed == key ? "--" + key : "--" + key + ",--" + dashed;
    CLI::Option* opt = nullptr;
    if constexpr (std::is_same_v<T, bool>) {
      const std::string neg = dashed == key ? "!--no-" + key : "!--no_" + key + ",!--no-" + dashed;
      opt = app_->add_flag(names + "," + neg, *parsed, help);
    } else if constexpr (is_vector<T>::value) {
      opt = app_->add_option(names, *parsed, help)->delimiter(',');
    } else {
      opt = app_->add_option(names, *parsed, help);
    }
    entries_.push_back(Entry{
        key,
        [&target, key](const Json& j, const std::string& where) {
          try {
            target = j.get<T>();
          } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(where + ": bad value for '" + key + "': " + e.what());
          }
        },
        [opt, parsed, &target] {
          if (opt->count() > 0) target = *parsed;
        },
        [&target] { return Json(target); }});
  }

  /// Config-file values first, then command-line flags.
  void apply(const Json& cfg, const std::string& where, const std::set<std::string>& extra_known) const {
    std::set<std::string> known = extra_known;
    for (const Entry& e : entries_) known.insert(e.key);
    reject_unknown_keys(cfg, known, where);
    for (const Entry& e : entries_)
      if (auto it = cfg.find(e.key); it != cfg.end()) e.from_json(*it, where);
    for (const Entry& e : entries_) e.from_flag();
  }

  Json echo() const {
    Json j = Json::object();
    for (const Entry& e : entries_) j[e.key] = e.to_json();
    return j;
  }

 private:
  template <class T>
  struct is_vector : std::false_type {};
  template <class T>
  struct is_vector<std::vector<T>> : std::true_type {};

  static std::string dash(std::string s) {
    for (char& c : s)
      if (c == '_') c = '-';
    return s;
  }

  struct Entry {
    std::string key;
    std::function<void(const Json&, const std::string&)> from_json;
    std::function<void()> from_flag;
    std::function<Json()> to_json;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out = "latseg_out";
};

const std::set<std::string> global_keys = {"seed", "threads", "out"};

Json read_config(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  try {
    Json j = Json::parse(in);
    require(j.is_object(), "config '" + path + "' must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config '" + path + "': " + e.what());
  }
}

/// Config-file globals, overridden by explicit global flags.
void resolve_globals(Globals& g, const Json& cfg, CLI::App& app) {
  if (cfg.contains("seed") && app.get_option("--seed")->count() == 0) read_optional(cfg, "seed", g.seed, "config");
  if (cfg.contains("threads") && app.get_option("--threads")->count() == 0) read_optional(cfg, "threads", g.threads, "config");
  if (cfg.contains("out") && app.get_option("--out")->count() == 0) read_optional(cfg, "out", g.out, "config");
}

Json provenance(const std::string& command, const Globals& g, const Json& settings) {
  return Json{{"command", command}, {"seed", g.seed}, {"threads", g.threads}, {"out", g.out}, {"config", settings}};
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory '" + p.string() + "': " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

/// First line of every generated CSV: the command, seed and effective config.
std::string csv_provenance(const Json& prov) { return "# latseg " + prov.dump() + "\n"; }

void require_path(const std::string& p, const char* what) {
  if (p.empty()) throw InvalidArgument(std::string(what) + " path is required");
  if (!fs::exists(p)) throw IoError(std::string(what) + " '" + p + "' does not exist");
}

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : (std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf")); }

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// A dataset directory, or a single trajectory CSV.
Dataset load_trajectories(const std::string& path) {
  require_path(path, "data");
  if (fs::is_directory(path)) return load_dataset(path);
  Dataset ds;
  ds.trajectories.push_back(load_trajectory_csv(path));
  ds.manifest = Json{{"files", Json::array({fs::path(path).filename().string()})}};
  return ds;
}

std::string trajectory_name(const Dataset& ds, std::size_t i) {
  if (ds.manifest.contains("files") && i < ds.manifest["files"].size()) return ds.manifest["files"][i].get<std::string>();
  return dataset_file_name(i);
}

void truncate_to(std::vector<Trajectory>& data, std::size_t limit) {
  if (limit > 0 && data.size() > limit) data.resize(limit);
}

// ---------------------------------------------------------------- generate

struct GenerateSettings {
  std::string family = "sine";
  std::string variant = "JD";
  long long train_count = -1;  // -1: family default
  long long val_count = -1;
  long long test_count = -1;
  bool aligned_train = true;
  bool aligned_eval = false;
  double noise_sd = -1.0;  // -1: family default
  bool mask = true;
  bool mask_shared = true;
  bool extract_sdfs = true;
  std::string spec = "";  // JSON object overriding generator fields
};

int cmd_generate(const Globals& g, const GenerateSettings& s, const Json& echo) {
  const bool sine = s.family == "sine";
  if (!sine && s.family != "lotka_volterra") throw InvalidArgument("family must be 'sine' or 'lotka_volterra'");
  const long long defaults[3] = {sine ? 7050 : 34000, sine ? 300 : 600, 150};
  const long long given[3] = {s.train_count, s.val_count, s.test_count};
  std::size_t counts[3];
  for (int i = 0; i < 3; ++i) {
    const long long c = given[i] < 0 ? defaults[i] : given[i];
    counts[i] = static_cast<std::size_t>(c);
  }
  Json overrides = Json::object();
  if (!s.spec.empty()) {
    try {
      overrides = Json::parse(s.spec);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("spec: ") + e.what());
    }
  }
  SineSpec sine_spec;
  LvSpec lv_spec;
  if (sine) {
    sine_spec = sine_spec_from_json(overrides);
    if (s.noise_sd >= 0) sine_spec.noise_sd = s.noise_sd;
  } else {
    lv_spec = lv_spec_from_json(overrides);
    lv_spec.variant = lv_variant_from_string(s.variant);
    if (s.noise_sd >= 0) lv_spec.noise_sd = s.noise_sd;
  }
  const MaskSpec mask{0.2, 0.25, s.mask_shared};
  const fs::path out = g.out;
  ensure_dir(out);
  const Json prov = provenance("generate", g, echo);
  const char* names[3] = {"train", "val", "test"};
  Json summary = Json::object();
  for (int split = 0; split < 3; ++split) {
    if (counts[split] == 0) continue;
    const std::uint64_t split_seed = derive_seed(g.seed, {static_cast<std::uint64_t>(split)});
    const bool aligned = split == 0 ? s.aligned_train : s.aligned_eval;
    std::vector<Trajectory> data;
    Json spec_json;
    if (sine) {
      SineSpec sp = sine_spec;
      sp.aligned = aligned;
      data = gen_sine(sp, counts[split], split_seed, g.threads);
      spec_json = to_json(sp);
    } else {
      LvSpec sp = lv_spec;
      sp.aligned = aligned;
      data = gen_lv(sp, counts[split], split_seed, g.threads);
      spec_json = to_json(sp);
    }
    // One mask seed for every split so the shared interior pattern matches.
    if (s.mask) apply_masking(data, derive_seed(g.seed, {10}), mask);
    Json info{{"split", names[split]}, {"spec", spec_json}, {"split_seed", split_seed}, {"masking", s.mask ? to_json(mask) : Json(nullptr)},
              {"provenance", prov}};
    save_dataset(data, out / names[split], info);
    std::size_t cps = 0;
    for (const Trajectory& t : data) cps += t.changepoints.size();
    summary[names[split]] = Json{{"count", data.size()}, {"changepoints", cps}};
    if (s.extract_sdfs && split < 2) {
      std::vector<Trajectory> sdfs;
      for (const Trajectory& t : data)
        for (Trajectory& part : extract_sdfs(t)) sdfs.push_back(std::move(part));
      info["kind"] = "sdf";
      save_dataset(sdfs, out / (std::string(names[split]) + "_sdf"), info);
      summary[std::string(names[split]) + "_sdf"] = Json{{"count", sdfs.size()}};
    }
  }
  write_json(out / "generate.json", Json{{"version", report_version}, {"provenance", prov}, {"splits", summary}});
  std::cout << "generated " << summary.dump() << " in " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainSettings {
  std::string train;
  std::string val;
  std::string init;
  std::string model = "sine";
  std::string model_config = "";  // JSON object overriding the preset
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  double lr_decay = 0.1;
  std::size_t lr_patience = 10;
  double min_learning_rate = 1e-4;
  std::size_t kl_anneal_epochs = 10;
  std::size_t samples = 1;
  double clip_norm = 2.0;
  bool subsample = true;
  bool truncate = true;
  std::size_t min_points = 30;
  std::size_t max_train = 0;
  std::size_t max_val = 0;
  bool visible_only = true;
};

ModelConfig model_config_for(const std::string& preset, const std::string& overrides) {
  Json j = Json::object();
  if (!overrides.empty()) {
    try {
      j = Json::parse(overrides);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("model_config: ") + e.what());
    }
  }
  if (!j.contains("preset")) j["preset"] = preset;
  return model_config_from_json(j);
}

std::vector<Series> training_series(const std::string& path, bool visible_only, std::size_t limit) {
  Dataset ds = load_trajectories(path);
  std::vector<Series> series = sdf_series(ds.trajectories, visible_only, 2);
  if (limit > 0 && series.size() > limit) series.resize(limit);
  return series;
}

int cmd_train(const Globals& g, const TrainSettings& s, const Json& echo) {
  require_path(s.train, "train");
  if (!s.val.empty()) require_path(s.val, "val");
  TrainConfig tc;
  tc.epochs = s.epochs;
  tc.batch_size = s.batch_size;
  tc.learning_rate = s.learning_rate;
  tc.lr_decay = s.lr_decay;
  tc.lr_patience = s.lr_patience;
  tc.min_learning_rate = s.min_learning_rate;
  tc.kl_anneal_epochs = s.kl_anneal_epochs;
  tc.samples = s.samples;
  tc.clip_norm = s.clip_norm;
  tc.augment = AugmentConfig{s.subsample, s.truncate, s.min_points};
  tc.seed = g.seed;
  tc.threads = g.threads;
  tc.validate();

  LatentOdeModel model;
  Json parent = nullptr;
  if (!s.init.empty()) {
    require_path(s.init, "init");
    Checkpoint ck = s.model_config.empty() ? load_checkpoint(s.init)
                                           : load_checkpoint(s.init, model_config_for(s.model, s.model_config));
    model = std::move(ck.model);
    parent = ck.lineage;
  } else {
    model = LatentOdeModel::create(model_config_for(s.model, s.model_config), derive_seed(g.seed, {3}));
  }
  const std::vector<Series> train_set = training_series(s.train, s.visible_only, s.max_train);
  const std::vector<Series> val_set = s.val.empty() ? std::vector<Series>{} : training_series(s.val, s.visible_only, s.max_val);
  for (const auto* set : {&train_set, &val_set})
    for (const Series& x : *set)
      require(x.dim() == model.config.data_dim, "training data dimension " + std::to_string(x.dim()) +
                                                    " does not match model data_dim " + std::to_string(model.config.data_dim));

  const fs::path out = g.out;
  ensure_dir(out);
  const Json prov = provenance("train", g, echo);
  auto lineage = [&](const Json& extra) {
    Json l{{"provenance", prov}, {"model_seed", derive_seed(g.seed, {3})}, {"train_count", train_set.size()},
           {"val_count", val_set.size()}, {"parent", parent}};
    l.update(extra);
    return l;
  };
  save_checkpoint(Checkpoint{model, lineage(Json{{"epoch", nullptr}})}, out / "model.ckpt");

  std::ofstream hist(out / "history.csv");
  if (!hist) throw IoError("cannot write history in '" + out.string() + "'");
  hist << csv_provenance(prov) << "epoch,train_loss,val_loss,kl_weight,learning_rate,is_best\n";
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(model, train_set, val_set, tc, [&](const EpochRecord& r, const LatentOdeModel& m, bool best) {
    hist << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.kl_weight) << ','
         << fmt(r.learning_rate) << ',' << (best ? 1 : 0) << '\n';
    hist.flush();
    if (best) save_checkpoint(Checkpoint{m, lineage(Json{{"epoch", r.epoch}, {"val_loss", r.val_loss}})}, out / "model.ckpt");
    std::cerr << "epoch " << r.epoch << " train " << r.train_loss << " val " << r.val_loss << (best ? " *" : "") << "\n";
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json summary{{"version", report_version},
               {"provenance", prov},
               {"model", to_json(model.config)},
               {"parameters", model.parameter_count()},
               {"train_count", train_set.size()},
               {"val_count", val_set.size()},
               {"epochs_run", result.history.size()},
               {"best_epoch", result.history.empty() ? Json(nullptr) : Json(result.best_epoch)},
               {"best_val_loss", finite_or_null(result.best_val_loss)},
               {"seconds", seconds}};
  write_json(out / "train.json", summary);
  std::cout << "trained " << result.history.size() << " epochs; checkpoint " << (out / "model.ckpt").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- segment / benchmark shared

struct SearchSettings {
  std::string checkpoint;
  std::string data;
  double beta = 0.0;
  double K = 200.0;  // negative disables pruning
  std::size_t min_length = 20;
  std::size_t samples = 100;
  int time_decimals = 2;
  double obs_variance = 0.0;  // 0: the model's
  std::size_t tolerance = 10;
  std::size_t limit = 0;
  std::size_t plots = 0;
};

void add_search_keys(Keys& k, SearchSettings& s) {
  k.add("checkpoint", s.checkpoint, "trained model checkpoint");
  k.add("data", s.data, "dataset directory or trajectory CSV");
  k.add("beta", s.beta, "per-segment penalty");
  k.add("K", s.K, "pruning constant (negative disables pruning)");
  k.add("min_length", s.min_length, "minimum segment length");
  k.add("samples", s.samples, "importance samples per segment");
  k.add("time_decimals", s.time_decimals, "segment time rounding (negative disables)");
  k.add("obs_variance", s.obs_variance, "observation variance (0: the model's)");
  k.add("tolerance", s.tolerance, "F1 matching tolerance in indices");
  k.add("limit", s.limit, "use only the first N trajectories (0: all)");
  k.add("plots", s.plots, "trajectories to emit plot files for");
}

SegmentConfig segment_config(const SearchSettings& s, std::uint64_t seed, bool segment) {
  SegmentConfig c;
  c.pelt.beta = s.beta;
  c.pelt.K = s.K < 0 ? no_pruning : s.K;
  c.pelt.min_length = s.min_length;
  c.pelt.threads = 1;
  c.cost.likelihood.samples = s.samples;
  c.cost.likelihood.obs_variance = s.obs_variance;
  c.cost.likelihood.seed = derive_seed(seed, {4});
  c.cost.time_decimals = s.time_decimals;
  c.segment = segment;
  c.f1_tolerance = s.tolerance;
  c.validate();
  return c;
}

std::vector<std::size_t> segment_ids(std::size_t n, const std::vector<std::size_t>& cps) {
  std::vector<std::size_t> id(n);
  std::size_t seg = 0;
  for (const auto& [a, b] : Segmentation{cps}.segments(n)) {
    for (std::size_t i = a; i <= b; ++i) id[i] = seg;
    ++seg;
  }
  return id;
}

/// Columns t, truth_d…, pred_d…, mask, true_segment, pred_segment.
void write_reconstruction_csv(const fs::path& p, const Trajectory& tr, const TrajectoryOutcome& r, const Json& prov) {
  std::ostringstream o;
  o << csv_provenance(prov) << "t";
  for (std::size_t d = 0; d < tr.dim(); ++d) o << ",truth_" << d;
  for (std::size_t d = 0; d < tr.dim(); ++d) o << ",pred_" << d;
  o << ",mask,true_segment,pred_segment\n";
  const auto ts = segment_ids(tr.size(), tr.changepoints), ps = segment_ids(tr.size(), r.changepoints);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    o << format_double(tr.times[i]);
    for (std::size_t d = 0; d < tr.dim(); ++d) o << ',' << format_double(tr.values.at(i, d));
    for (std::size_t d = 0; d < tr.dim(); ++d) o << ',' << (r.has_reconstruction ? fmt(r.reconstruction.at(i, d)) : "nan");
    o << ',' << static_cast<int>(tr.mask[i]) << ',' << ts[i] << ',' << ps[i] << '\n';
  }
  write_text(p, o.str());
}

/// Observations as markers, reconstruction as lines, predicted segments as
/// bands, true changepoints as dashed lines, extrapolation region shaded.
void write_plot_svg(const fs::path& p, const std::string& title, const Trajectory& tr, const TrajectoryOutcome& r) {
  Plot plot;
  plot.title = title;
  std::size_t seg = 0;
  for (const auto& [a, b] : Segmentation{r.changepoints}.segments(tr.size())) {
    const double x1 = b + 1 < tr.size() ? tr.times[b + 1] : tr.times[b];
    plot.bands.push_back({tr.times[a], x1, band_palette(seg++)});
  }
  const auto extrap = tr.indices_with(MaskClass::extrap_heldout);
  if (!extrap.empty()) plot.bands.push_back({tr.times[extrap.front()], tr.times.back(), "#fff3b0"});
  for (std::size_t cp : tr.changepoints) plot.vlines.push_back(0.5 * (tr.times[cp] + tr.times[cp + 1]));
  for (std::size_t d = 0; d < tr.dim(); ++d) {
    PlotSeries obs{"data " + std::to_string(d), tr.times, {}, palette(2 * d), true};
    for (std::size_t i = 0; i < tr.size(); ++i) obs.y.push_back(tr.values.at(i, d));
    plot.series.push_back(std::move(obs));
    if (r.has_reconstruction) {
      // Separate polylines per segment so jumps are not bridged.
      std::size_t k = 0;
      for (const auto& [a, b] : Segmentation{r.changepoints}.segments(tr.size())) {
        PlotSeries line{k == 0 ? "recon " + std::to_string(d) : "", {}, {}, palette(2 * d + 1), false};
        for (std::size_t i = a; i <= b; ++i) {
          line.x.push_back(tr.times[i]);
          line.y.push_back(r.reconstruction.at(i, d));
        }
        plot.series.push_back(std::move(line));
        ++k;
      }
    }
  }
  write_text(p, render_svg(plot));
}

Json outcome_json(const std::string& name, const Trajectory& tr, const TrajectoryOutcome& r) {
  const SegMetrics& m = r.segmentation;
  Json j{{"file", name},
         {"observations", tr.size()},
         {"visible", tr.visible_indices().size()},
         {"true_changepoints", tr.changepoints},
         {"changepoints", r.changepoints},
         {"objective", finite_or_null(r.objective)},
         {"seconds", r.seconds},
         {"cost_evaluations", r.stats.cost_evaluations},
         {"pruned", r.stats.pruned},
         {"max_candidates", r.stats.max_candidates},
         {"rand_index", m.rand_index},
         {"hausdorff", m.hausdorff.defined ? Json(m.hausdorff.value) : Json(nullptr)},
         {"f1", m.f1.f1},
         {"precision", m.f1.precision},
         {"recall", m.f1.recall},
         {"annotation_error", m.annotation_error}};
  if (r.has_reconstruction) {
    j["visible_changepoints"] = r.visible_changepoints;
    j["joint_log_probability"] = finite_or_null(r.joint_log_probability);
    j["mse_total"] = finite_or_null(r.reconstruction_error.total);
    j["mse_interpolation"] = finite_or_null(r.reconstruction_error.interpolation);
    j["mse_extrapolation"] = finite_or_null(r.reconstruction_error.extrapolation);
  }
  return j;
}

Json summary_json(const MethodSummary& s) {
  return Json{{"method", s.method},
              {"trajectories", s.trajectories},
              {"test_mse", finite_or_null(s.mse_total)},
              {"interpolation_mse", finite_or_null(s.mse_interpolation)},
              {"extrapolation_mse", finite_or_null(s.mse_extrapolation)},
              {"rand_index", finite_or_null(s.rand_index)},
              {"hausdorff", finite_or_null(s.hausdorff)},
              {"hausdorff_trajectories", s.hausdorff_count},
              {"f1", finite_or_null(s.f1)},
              {"annotation_error", finite_or_null(s.annotation_error)},
              {"abs_annotation_error", finite_or_null(s.abs_annotation_error)},
              {"seconds", s.seconds},
              {"cost_evaluations", s.cost_evaluations},
              {"pruned", s.pruned}};
}

const char* summary_header = "method,trajectories,test_mse,interpolation_mse,extrapolation_mse,rand_index,hausdorff,f1,"
                             "annotation_error,abs_annotation_error,seconds,cost_evaluations,pruned\n";

std::string summary_row(const MethodSummary& s) {
  std::ostringstream o;
  o << s.method << ',' << s.trajectories << ',' << fmt(s.mse_total) << ',' << fmt(s.mse_interpolation) << ','
    << fmt(s.mse_extrapolation) << ',' << fmt(s.rand_index) << ',' << fmt(s.hausdorff) << ',' << fmt(s.f1) << ','
    << fmt(s.annotation_error) << ',' << fmt(s.abs_annotation_error) << ',' << fmt(s.seconds) << ',' << s.cost_evaluations
    << ',' << s.pruned << '\n';
  return o.str();
}

// ---------------------------------------------------------------- segment

int cmd_segment(const Globals& g, const SearchSettings& s, bool segment, const Json& echo) {
  require_path(s.checkpoint, "checkpoint");
  const Checkpoint ck = load_checkpoint(s.checkpoint);
  Dataset ds = load_trajectories(s.data);
  truncate_to(ds.trajectories, s.limit);
  const SegmentConfig cfg = segment_config(s, g.seed, segment);
  for (const Trajectory& tr : ds.trajectories)
    require(tr.dim() == ck.model.config.data_dim, "trajectory dimension does not match the model");

  const fs::path out = g.out;
  ensure_dir(out / "reconstructions");
  if (s.plots) ensure_dir(out / "plots");
  const Json prov = provenance("segment", g, echo);
  const auto rows = run_all(ds.trajectories.size(), g.threads,
                            [&](std::size_t i) { return segment_trajectory(ck.model, ds.trajectories[i], cfg); });
  Json items = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string name = trajectory_name(ds, i);
    const std::string recon = "reconstructions/" + fs::path(name).stem().string() + ".csv";
    write_reconstruction_csv(out / recon, ds.trajectories[i], rows[i], prov);
    Json j = outcome_json(name, ds.trajectories[i], rows[i]);
    j["reconstruction"] = recon;
    items.push_back(std::move(j));
    if (i < s.plots)
      write_plot_svg(out / "plots" / (fs::path(name).stem().string() + ".svg"), name, ds.trajectories[i], rows[i]);
  }
  const MethodSummary sum = summarize(segment ? "latsegode" : "latent_ode", ds.trajectories, rows);
  write_json(out / "segmentation.json", Json{{"version", report_version},
                                              {"provenance", prov},
                                              {"model", to_json(ck.model.config)},
                                              {"summary", summary_json(sum)},
                                              {"trajectories", items}});
  std::cout << "segmented " << rows.size() << " trajectories; rand " << sum.rand_index << " f1 " << sum.f1 << "\n";
  return 0;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkSettings {
  SearchSettings search;
  std::vector<std::string> methods = {"latsegode", "latent_ode", "rbf", "ar", "norm"};
  std::size_t ar_order = 10;
  double rbf_gamma = 0.0;
  std::size_t grid_size = 0;
  std::vector<double> k_sweep;
};

int cmd_benchmark(const Globals& g, BenchmarkSettings s, const Json& echo) {
  const auto t_load = std::chrono::steady_clock::now();
  Dataset ds = load_trajectories(s.search.data);
  truncate_to(ds.trajectories, s.search.limit);
  std::optional<Checkpoint> ck;
  auto needs_model = [](const std::string& m) { return m == "latsegode" || m == "latent_ode"; };
  bool any_model = !s.k_sweep.empty();
  for (const std::string& m : s.methods) {
    if (!needs_model(m) && m != "rbf" && m != "ar" && m != "norm") throw InvalidArgument("unknown method '" + m + "'");
    any_model = any_model || needs_model(m);
  }
  if (any_model) {
    require_path(s.search.checkpoint, "checkpoint");
    ck = load_checkpoint(s.search.checkpoint);
  }
  const double load_seconds = detail::seconds_since(t_load);

  const fs::path out = g.out;
  ensure_dir(out);
  if (s.search.plots) ensure_dir(out / "plots");
  const Json prov = provenance("benchmark", g, echo);
  BaselineConfig bcfg;
  bcfg.grid_size = s.grid_size;
  bcfg.min_length = s.search.min_length;
  bcfg.ar.order = s.ar_order;
  bcfg.rbf.gamma = s.rbf_gamma;
  bcfg.f1_tolerance = s.search.tolerance;

  std::ostringstream per;
  per << csv_provenance(prov)
      << "method,file,observations,true_changepoints,predicted_changepoints,rand_index,hausdorff,f1,annotation_error,"
         "mse_total,mse_interpolation,mse_extrapolation,objective,seconds,cost_evaluations,pruned\n";
  std::ostringstream agg;
  agg << csv_provenance(prov) << summary_header;
  Json summaries = Json::array(), timings = Json{{"load", load_seconds}};
  std::vector<std::pair<std::string, std::vector<TrajectoryOutcome>>> all;

  for (const std::string& method : s.methods) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TrajectoryOutcome> rows;
    if (needs_model(method)) {
      const SegmentConfig cfg = segment_config(s.search, g.seed, method == "latsegode");
      rows = run_all(ds.trajectories.size(), g.threads,
                     [&](std::size_t i) { return segment_trajectory(ck->model, ds.trajectories[i], cfg); });
    } else {
      const BaselineKind kind = method == "rbf" ? BaselineKind::rbf : method == "ar" ? BaselineKind::ar : BaselineKind::norm;
      rows = run_all(ds.trajectories.size(), g.threads,
                     [&](std::size_t i) { return baseline_trajectory(kind, ds.trajectories[i], bcfg); });
    }
    timings[method] = detail::seconds_since(t0);
    const MethodSummary sum = summarize(method, ds.trajectories, rows);
    summaries.push_back(summary_json(sum));
    agg << summary_row(sum);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const TrajectoryOutcome& r = rows[i];
      const Trajectory& tr = ds.trajectories[i];
      per << method << ',' << trajectory_name(ds, i) << ',' << tr.size() << ',' << tr.changepoints.size() << ','
          << r.changepoints.size() << ',' << fmt(r.segmentation.rand_index) << ','
          << (r.segmentation.hausdorff.defined ? fmt(r.segmentation.hausdorff.value) : "nan") << ','
          << fmt(r.segmentation.f1.f1) << ',' << r.segmentation.annotation_error << ','
          << (r.has_reconstruction ? fmt(r.reconstruction_error.total) : "nan") << ','
          << (r.has_reconstruction ? fmt(r.reconstruction_error.interpolation) : "nan") << ','
          << (r.has_reconstruction ? fmt(r.reconstruction_error.extrapolation) : "nan") << ',' << fmt(r.objective) << ','
          << fmt(r.seconds) << ',' << r.stats.cost_evaluations << ',' << r.stats.pruned << '\n';
    }
    std::cerr << method << ": rand " << sum.rand_index << " f1 " << sum.f1 << " hausdorff " << sum.hausdorff << "\n";
    all.emplace_back(method, std::move(rows));
  }

  for (std::size_t i = 0; i < std::min(s.search.plots, ds.trajectories.size()); ++i) {
    const std::string stem = fs::path(trajectory_name(ds, i)).stem().string();
    for (const auto& [method, rows] : all) {
      write_reconstruction_csv(out / "plots" / (stem + "_" + method + ".csv"), ds.trajectories[i], rows[i], prov);
      write_plot_svg(out / "plots" / (stem + "_" + method + ".svg"), stem + " " + method, ds.trajectories[i], rows[i]);
    }
  }

  Json sweep = Json::array();
  if (!s.k_sweep.empty()) {
    std::ostringstream ks;
    ks << csv_provenance(prov) << "K,objective,pruned,cost_evaluations,rand_index,hausdorff,f1,abs_annotation_error,seconds\n";
    for (double K : s.k_sweep) {
      SearchSettings sk = s.search;
      sk.K = K;
      const SegmentConfig cfg = segment_config(sk, g.seed, true);
      const auto rows = run_all(ds.trajectories.size(), g.threads,
                                [&](std::size_t i) { return segment_trajectory(ck->model, ds.trajectories[i], cfg); });
      const MethodSummary sum = summarize("latsegode", ds.trajectories, rows);
      ks << fmt(K) << ',' << fmt(sum.objective) << ',' << sum.pruned << ',' << sum.cost_evaluations << ','
         << fmt(sum.rand_index) << ',' << fmt(sum.hausdorff) << ',' << fmt(sum.f1) << ',' << fmt(sum.abs_annotation_error)
         << ',' << fmt(sum.seconds) << '\n';
      Json row = summary_json(sum);
      row["K"] = K;
      row["objective"] = sum.objective;
      sweep.push_back(row);
      std::cerr << "K=" << K << ": objective " << sum.objective << " pruned " << sum.pruned << "\n";
    }
    write_text(out / "k_sweep.csv", ks.str());
  }

  write_text(out / "per_trajectory.csv", per.str());
  write_text(out / "aggregate.csv", agg.str());
  write_json(out / "report.json", Json{{"version", report_version},
                                        {"provenance", prov},
                                        {"trajectories", ds.trajectories.size()},
                                        {"timings", timings},
                                        {"aggregate", summaries},
                                        {"k_sweep", sweep}});
  std::cout << "benchmark written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- metrics

struct MetricsSettings {
  std::string data;
  std::string segmentation;
  std::size_t tolerance = 10;
};

Tensor read_reconstruction(const fs::path& p, std::size_t rows, std::size_t dim) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open reconstruction '" + p.string() + "'");
  std::string line;
  Tensor pred = Tensor::matrix(rows, dim, NAN);
  std::size_t r = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 2 * dim + 4 || r >= rows) throw MalformedFile(p.string() + ": unexpected row layout");
    for (std::size_t d = 0; d < dim; ++d) {
      const std::string& v = f[1 + dim + d];
      pred.at(r, d) = v == "nan" ? NAN : detail::parse_double(v, p.string());
    }
    ++r;
  }
  if (r != rows) throw MalformedFile(p.string() + ": row count does not match the trajectory");
  return pred;
}

int cmd_metrics(const Globals& g, const MetricsSettings& s, const Json& echo) {
  require_path(s.segmentation, "segmentation");
  const Dataset ds = load_trajectories(s.data);
  Json seg;
  {
    std::ifstream in(s.segmentation);
    try {
      seg = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedFile(s.segmentation + ": " + e.what());
    }
  }
  const fs::path base = fs::path(s.segmentation).parent_path();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) index[trajectory_name(ds, i)] = i;
  std::vector<Trajectory> used;
  std::vector<TrajectoryOutcome> rows;
  try {
    for (const Json& item : seg.at("trajectories")) {
      const std::string name = item.at("file").get<std::string>();
      auto it = index.find(name);
      if (it == index.end()) throw InvalidArgument("segmentation refers to unknown trajectory '" + name + "'");
      const Trajectory& tr = ds.trajectories[it->second];
      TrajectoryOutcome r;
      r.changepoints = item.at("changepoints").get<std::vector<std::size_t>>();
      Segmentation{r.changepoints}.validate(tr.size());
      if (item.contains("reconstruction")) {
        r.reconstruction = read_reconstruction(base / item["reconstruction"].get<std::string>(), tr.size(), tr.dim());
        r.has_reconstruction = true;
      }
      detail::score(tr, r, s.tolerance);
      used.push_back(tr);
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(s.segmentation + ": " + e.what());
  }
  const MethodSummary sum = summarize("input", used, rows);
  const fs::path out = g.out;
  ensure_dir(out);
  const Json prov = provenance("metrics", g, echo);
  Json items = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) items.push_back(outcome_json(seg["trajectories"][i]["file"], used[i], rows[i]));
  write_json(out / "metrics.json", Json{{"version", report_version}, {"provenance", prov}, {"summary", summary_json(sum)},
                                        {"trajectories", items}});
  write_text(out / "metrics.csv", csv_provenance(prov) + summary_header + summary_row(sum));
  std::cout << "rand " << sum.rand_index << " f1 " << sum.f1 << " hausdorff " << sum.hausdorff << " mse " << sum.mse_total << "\n";
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::invalid_argument: return exit_invalid;
    case ErrorKind::numerical:
    case ErrorKind::non_convergence: return exit_numerical;
    case ErrorKind::io:
    case ErrorKind::malformed: return exit_io;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent segmented ODE: data generation, training, segmentation and benchmarking"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file with flat keys")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--threads", g.threads, "worker threads (0: all cores)");
  app.add_option("--out", g.out, "output directory");

  GenerateSettings gen;
  CLI::App* generate = app.add_subcommand("generate", "write train/val/test datasets");
  Keys gen_keys(generate);
  gen_keys.add("family", gen.family, "sine | lotka_volterra");
  gen_keys.add("variant", gen.variant, "Lotka-Volterra variant: JD | SD");
  gen_keys.add("train_count", gen.train_count, "training trajectories (-1: family default)");
  gen_keys.add("val_count", gen.val_count, "validation trajectories (-1: family default)");
  gen_keys.add("test_count", gen.test_count, "test trajectories (-1: family default)");
  gen_keys.add("aligned_train", gen.aligned_train, "share observation-time patterns in the training split");
  gen_keys.add("aligned_eval", gen.aligned_eval, "share observation-time patterns in val/test splits");
  gen_keys.add("noise_sd", gen.noise_sd, "observation noise (-1: family default)");
  gen_keys.add("mask", gen.mask, "apply the held-out masking protocol");
  gen_keys.add("mask_shared", gen.mask_shared, "one interior mask pattern for all trajectories");
  gen_keys.add("extract_sdfs", gen.extract_sdfs, "also write per-segment datasets for train and val");
  gen_keys.add("spec", gen.spec, "JSON object overriding generator fields");

  TrainSettings tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train the base model on segment datasets");
  Keys train_keys(train_cmd);
  train_keys.add("train", tr.train, "training dataset directory");
  train_keys.add("val", tr.val, "validation dataset directory");
  train_keys.add("init", tr.init, "checkpoint to continue from");
  train_keys.add("model", tr.model, "architecture preset: sine | lotka_volterra");
  train_keys.add("model_config", tr.model_config, "JSON object overriding the preset");
  train_keys.add("epochs", tr.epochs, "training epochs");
  train_keys.add("batch_size", tr.batch_size, "trajectories per batch");
  train_keys.add("learning_rate", tr.learning_rate, "initial Adamax learning rate");
  train_keys.add("lr_decay", tr.lr_decay, "learning-rate factor on plateau");
  train_keys.add("lr_patience", tr.lr_patience, "epochs without improvement before decay");
  train_keys.add("min_learning_rate", tr.min_learning_rate, "learning-rate floor");
  train_keys.add("kl_anneal_epochs", tr.kl_anneal_epochs, "epochs for the KL weight to reach 1");
  train_keys.add("samples", tr.samples, "latent samples per trajectory");
  train_keys.add("clip_norm", tr.clip_norm, "gradient norm clip");
  train_keys.add("subsample", tr.subsample, "random sub-sampling augmentation");
  train_keys.add("truncate", tr.truncate, "random start-truncation augmentation");
  train_keys.add("min_points", tr.min_points, "augmentation lower bound on points");
  train_keys.add("max_train", tr.max_train, "use at most N training segments (0: all)");
  train_keys.add("max_val", tr.max_val, "use at most N validation segments (0: all)");
  train_keys.add("visible_only", tr.visible_only, "train on visible points only");

  SearchSettings seg;
  bool do_segment = true;
  CLI::App* segment_cmd = app.add_subcommand("segment", "segment and reconstruct trajectories with a trained model");
  Keys seg_keys(segment_cmd);
  add_search_keys(seg_keys, seg);
  seg_keys.add("segment", do_segment, "run PELT (--no-segment: one segment per trajectory)");

  BenchmarkSettings bench;
  CLI::App* bench_cmd = app.add_subcommand("benchmark", "compare LatSegODE with known-k baselines");
  Keys bench_keys(bench_cmd);
  add_search_keys(bench_keys, bench.search);
  bench_keys.add("methods", bench.methods, "latsegode, latent_ode, rbf, ar, norm");
  bench_keys.add("ar_order", bench.ar_order, "AR baseline order");
  bench_keys.add("rbf_gamma", bench.rbf_gamma, "RBF bandwidth (0: median heuristic)");
  bench_keys.add("grid_size", bench.grid_size, "baseline interpolation grid (0: trajectory length)");
  bench_keys.add("k_sweep", bench.k_sweep, "K values for a pruning sweep");

  MetricsSettings met;
  CLI::App* metrics_cmd = app.add_subcommand("metrics", "score a segmentation.json against a labelled dataset");
  Keys met_keys(metrics_cmd);
  met_keys.add("data", met.data, "labelled dataset directory or CSV");
  met_keys.add("segmentation", met.segmentation, "segmentation.json from the segment command");
  met_keys.add("tolerance", met.tolerance, "F1 matching tolerance in indices");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_invalid;
  }

  try {
    const Json cfg = read_config(g.config);
    resolve_globals(g, cfg, app);
    if (*generate) {
      gen_keys.apply(cfg, "config", global_keys);
      return cmd_generate(g, gen, gen_keys.echo());
    }
    if (*train_cmd) {
      train_keys.apply(cfg, "config", global_keys);
      return cmd_train(g, tr, train_keys.echo());
    }
    if (*segment_cmd) {
      seg_keys.apply(cfg, "config", global_keys);
      return cmd_segment(g, seg, do_segment, seg_keys.echo());
    }
    if (*bench_cmd) {
      bench_keys.apply(cfg, "config", global_keys);
      return cmd_benchmark(g, bench, bench_keys.echo());
    }
    if (*metrics_cmd) {
      met_keys.apply(cfg, "config", global_keys);
      return cmd_metrics(g, met, met_keys.echo());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
