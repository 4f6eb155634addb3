#include "visurf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "visurf/errors.hpp"

namespace visurf::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Spec validation
// ---------------------------------------------------------------------------

void ExperimentSpec::validate() const {
  if (name.empty()) throw ConfigError("harness: experiment name must not be empty");
  if (out_dir.empty()) throw ConfigError("harness: out_dir must not be empty");
  if (seeds.empty()) throw ConfigError("harness: seed list must not be empty");
  if (eval_every < 1) throw ConfigError("harness: eval_every must be >= 1");
  if (paradigms.empty()) throw ConfigError("harness: at least one paradigm is required");
  std::set<std::string> names;
  for (const ParadigmEntry& entry : paradigms) {
    if (entry.name.empty()) throw ConfigError("harness: paradigm name must not be empty");
    if (!names.insert(entry.name).second)
      throw ConfigError("harness: duplicate paradigm name '" + entry.name + "'");
    entry.config.validate();
  }
  if (dataset.train_n < 1 || dataset.eval_n < 1)
    throw ConfigError("harness: dataset sizes must be positive");
  if (pretrain.enabled && (pretrain.train_n < 1 || pretrain.eval_n < 1))
    throw ConfigError("harness: pretrain dataset sizes must be positive");
}

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

struct ParseCursor {
  std::string origin;
  int line_no = 0;

  [[noreturn]] void fail(const std::string& message) const {
    throw ConfigError("config: " + origin + ":" + std::to_string(line_no) + ": " + message);
  }

  int to_int(const std::string& v) const {
    try {
      size_t pos = 0;
      const int out = std::stoi(v, &pos);
      if (pos != v.size()) fail("expected integer, got '" + v + "'");
      return out;
    } catch (const std::logic_error&) {
      fail("expected integer, got '" + v + "'");
    }
  }

  uint64_t to_u64(const std::string& v) const {
    try {
      size_t pos = 0;
      const uint64_t out = std::stoull(v, &pos);
      if (pos != v.size()) fail("expected unsigned integer, got '" + v + "'");
      return out;
    } catch (const std::logic_error&) {
      fail("expected unsigned integer, got '" + v + "'");
    }
  }

  double to_double(const std::string& v) const {
    try {
      size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) fail("expected number, got '" + v + "'");
      return out;
    } catch (const std::logic_error&) {
      fail("expected number, got '" + v + "'");
    }
  }

  bool to_bool(const std::string& v) const {
    if (v == "true") return true;
    if (v == "false") return false;
    fail("expected true/false, got '" + v + "'");
  }

  std::vector<uint64_t> to_u64_list(const std::string& v) const {
    std::vector<uint64_t> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
      part = trim(part);
      if (!part.empty()) out.push_back(to_u64(part));
    }
    if (out.empty()) fail("expected a comma-separated list, got '" + v + "'");
    return out;
  }
};

}  // namespace

ExperimentSpec parse_spec(std::istream& in, const std::string& origin) {
  ExperimentSpec spec;
  spec.paradigms.clear();

  enum class Section { kTop, kShape, kDataset, kPretrain, kParadigm };
  Section section = Section::kTop;
  ParadigmEntry* paradigm = nullptr;
  ParseCursor cursor{origin, 0};

  std::string raw;
  while (std::getline(in, raw)) {
    ++cursor.line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') cursor.fail("unterminated section header");
      const std::string header = trim(line.substr(1, line.size() - 2));
      if (header == "shape") {
        section = Section::kShape;
      } else if (header == "dataset") {
        section = Section::kDataset;
      } else if (header == "pretrain") {
        section = Section::kPretrain;
        spec.pretrain.enabled = true;
      } else if (header.rfind("paradigm ", 0) == 0) {
        section = Section::kParadigm;
        ParadigmEntry entry;
        entry.name = trim(header.substr(9));
        if (entry.name.empty()) cursor.fail("paradigm section needs a name");
        spec.paradigms.push_back(entry);
        paradigm = &spec.paradigms.back();
      } else {
        cursor.fail("unknown section '" + header + "'");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) cursor.fail("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) cursor.fail("empty key");

    switch (section) {
      case Section::kTop:
        if (key == "name") spec.name = value;
        else if (key == "out_dir") spec.out_dir = value;
        else if (key == "seeds") spec.seeds = cursor.to_u64_list(value);
        else if (key == "eval_every") spec.eval_every = cursor.to_int(value);
        else cursor.fail("unknown key '" + key + "'");
        break;
      case Section::kShape:
        if (key == "items") spec.shape.n_items = cursor.to_int(value);
        else if (key == "contexts") spec.shape.n_contexts = cursor.to_int(value);
        else if (key == "max_len") spec.shape.max_len = cursor.to_int(value);
        else cursor.fail("unknown key '" + key + "' in [shape]");
        break;
      case Section::kDataset:
        if (key == "train_n") spec.dataset.train_n = cursor.to_int(value);
        else if (key == "eval_n") spec.dataset.eval_n = cursor.to_int(value);
        else if (key == "non_object_fraction")
          spec.dataset.non_object_fraction = cursor.to_double(value);
        else if (key == "seed") spec.dataset.seed = cursor.to_u64(value);
        else cursor.fail("unknown key '" + key + "' in [dataset]");
        break;
      case Section::kPretrain:
        if (key == "enabled") spec.pretrain.enabled = cursor.to_bool(value);
        else if (key == "steps") spec.pretrain.steps = cursor.to_int(value);
        else if (key == "lr") spec.pretrain.lr = cursor.to_double(value);
        else if (key == "batch_size") spec.pretrain.batch_size = cursor.to_int(value);
        else if (key == "min_iou") spec.pretrain.min_iou = cursor.to_double(value);
        else if (key == "train_n") spec.pretrain.train_n = cursor.to_int(value);
        else if (key == "eval_n") spec.pretrain.eval_n = cursor.to_int(value);
        else if (key == "seed") spec.pretrain.seed = cursor.to_u64(value);
        else cursor.fail("unknown key '" + key + "' in [pretrain]");
        break;
      case Section::kParadigm: {
        trainer::RunConfig& cfg = paradigm->config;
        if (key == "type") cfg.paradigm = trainer::paradigm_from_name(value);
        else if (key == "steps") cfg.steps = cursor.to_int(value);
        else if (key == "lr") cfg.lr = cursor.to_double(value);
        else if (key == "batch_size") cfg.batch_size = cursor.to_int(value);
        else if (key == "group_size") cfg.group_size = cursor.to_int(value);
        else if (key == "epsilon_clip") cfg.epsilon_clip = cursor.to_double(value);
        else if (key == "inner_updates") cfg.inner_updates = cursor.to_int(value);
        else if (key == "stage_split") cfg.stage_split = cursor.to_int(value);
        else if (key == "align") cfg.reward.controls.align = cursor.to_bool(value);
        else if (key == "eliminate") cfg.reward.controls.eliminate = cursor.to_bool(value);
        else if (key == "smooth") cfg.reward.controls.smooth = cursor.to_bool(value);
        else if (key == "w_fmt") cfg.reward.w_fmt = cursor.to_double(value);
        else if (key == "w_acc") cfg.reward.w_acc = cursor.to_double(value);
        else if (key == "entropy_sample_budget")
          cfg.entropy_sample_budget = cursor.to_int(value);
        else if (key == "stratify_non_object")
          cfg.stratify_non_object = cursor.to_bool(value);
        else if (key == "checkpoint_every") cfg.checkpoint_every = cursor.to_int(value);
        else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
        else cursor.fail("unknown key '" + key + "' in [paradigm " + paradigm->name + "]");
        break;
      }
    }
  }
  spec.validate();
  return spec;
}

ExperimentSpec parse_spec_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  return parse_spec(in, path.filename().string());
}

// ---------------------------------------------------------------------------
// Metrics / evaluation persistence
// ---------------------------------------------------------------------------

namespace {

ordered_json metrics_to_json(const trainer::StepMetrics& m) {
  ordered_json line;
  line["step"] = m.step;
  line["loss"] = m.loss;
  line["mean_rollout_reward"] = m.mean_rollout_reward;
  line["label_reward"] = m.label_reward;
  line["a_label_mean"] = m.a_label_mean;
  line["entropy"] = m.entropy;
  line["grad_norm"] = m.grad_norm;
  line["smoothed_fraction"] = m.smoothed_fraction;
  return line;
}

trainer::StepMetrics metrics_from_json(const json& line) {
  trainer::StepMetrics m;
  m.step = line.at("step").get<int>();
  m.loss = line.at("loss").get<double>();
  m.mean_rollout_reward = line.at("mean_rollout_reward").get<double>();
  m.label_reward = line.at("label_reward").get<double>();
  m.a_label_mean = line.at("a_label_mean").get<double>();
  m.entropy = line.at("entropy").get<double>();
  m.grad_norm = line.at("grad_norm").get<double>();
  m.smoothed_fraction = line.at("smoothed_fraction").get<double>();
  return m;
}

ordered_json slice_to_json(const trainer::EvalSlice& s) {
  ordered_json out;
  out["mean_iou"] = s.mean_iou;
  out["n_acc"] = s.n_acc;
  out["format_rate"] = s.format_rate;
  out["count"] = s.count;
  out["non_object_count"] = s.non_object_count;
  return out;
}

trainer::EvalSlice slice_from_json(const json& in) {
  trainer::EvalSlice s;
  s.mean_iou = in.at("mean_iou").get<double>();
  s.n_acc = in.at("n_acc").get<double>();
  s.format_rate = in.at("format_rate").get<double>();
  s.count = in.at("count").get<int>();
  s.non_object_count = in.at("non_object_count").get<int>();
  return s;
}

ordered_json report_to_json(const trainer::EvalReport& r) {
  ordered_json out;
  out["mean_iou"] = r.mean_iou;
  out["n_acc"] = r.n_acc;
  out["format_rate"] = r.format_rate;
  out["count"] = r.count;
  out["non_object_count"] = r.non_object_count;
  ordered_json families = ordered_json::object();
  for (const auto& [family, slice] : r.by_family)
    families[tasks::family_name(family)] = slice_to_json(slice);
  out["by_family"] = families;
  return out;
}

trainer::EvalReport report_from_json(const json& in) {
  trainer::EvalReport r;
  r.mean_iou = in.at("mean_iou").get<double>();
  r.n_acc = in.at("n_acc").get<double>();
  r.format_rate = in.at("format_rate").get<double>();
  r.count = in.at("count").get<int>();
  r.non_object_count = in.at("non_object_count").get<int>();
  for (const auto& [name, slice] : in.at("by_family").items())
    r.by_family[tasks::family_from_name(name)] = slice_from_json(slice);
  return r;
}

}  // namespace

void write_metrics_jsonl(std::span<const trainer::StepMetrics> metrics, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("harness: cannot open " + path.string());
  for (const trainer::StepMetrics& m : metrics) out << metrics_to_json(m).dump() << "\n";
  if (!out) throw IoError("harness: write failed: " + path.string());
}

std::vector<trainer::StepMetrics> read_metrics_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("harness: cannot open " + path.string());
  std::vector<trainer::StepMetrics> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(metrics_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError("harness: bad metrics line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_evals_jsonl(std::span<const EvalPoint> evals, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("harness: cannot open " + path.string());
  for (const EvalPoint& point : evals) {
    ordered_json line;
    line["step"] = point.step;
    line["post"] = report_to_json(point.post);
    if (point.held) line["held"] = report_to_json(*point.held);
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("harness: write failed: " + path.string());
}

std::vector<EvalPoint> read_evals_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("harness: cannot open " + path.string());
  std::vector<EvalPoint> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json parsed = json::parse(line);
      EvalPoint point;
      point.step = parsed.at("step").get<int>();
      point.post = report_from_json(parsed.at("post"));
      if (parsed.contains("held")) point.held = report_from_json(parsed.at("held"));
      out.push_back(std::move(point));
    } catch (const json::exception& e) {
      throw DataError("harness: bad eval line in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

const EvalPoint& RunRecord::final_eval() const {
  if (evals.empty()) throw DataError("harness: run '" + paradigm + "' has no evaluations");
  return evals.back();
}

const RunRecord* ComparisonReport::find(const std::string& paradigm, uint64_t seed) const {
  for (const RunRecord& run : runs)
    if (run.paradigm == paradigm && run.seed == seed) return &run;
  return nullptr;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_summary_csv(const ComparisonReport& report, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("harness: cannot open " + path.string());
  out << "paradigm,seed,failed,final_mean_iou,final_n_acc,final_format_rate,held_retention\n";
  for (const RunRecord& run : report.runs) {
    out << run.paradigm << "," << run.seed << "," << (run.failed ? 1 : 0);
    if (!run.failed && !run.evals.empty()) {
      const EvalPoint& fin = run.final_eval();
      out << "," << format_double(fin.post.mean_iou) << "," << format_double(fin.post.n_acc)
          << "," << format_double(fin.post.format_rate) << ",";
      if (fin.held) out << format_double(fin.held->mean_iou);
    } else {
      out << ",,,,";
    }
    out << "\n";
  }
}

void write_manifest(const ComparisonReport& report, const fs::path& root) {
  ordered_json manifest;
  manifest["name"] = report.spec.name;
  manifest["eval_every"] = report.spec.eval_every;
  manifest["seeds"] = report.spec.seeds;
  manifest["pretrain_iou"] = report.pretrain_iou;
  ordered_json paradigms = ordered_json::array();
  for (const ParadigmEntry& entry : report.spec.paradigms) {
    ordered_json p;
    p["name"] = entry.name;
    p["type"] = trainer::paradigm_name(entry.config.paradigm);
    p["steps"] = entry.config.steps;
    p["lr"] = entry.config.lr;
    p["batch_size"] = entry.config.batch_size;
    p["group_size"] = entry.config.group_size;
    paradigms.push_back(p);
  }
  manifest["paradigms"] = paradigms;
  ordered_json runs = ordered_json::array();
  for (const RunRecord& run : report.runs) {
    ordered_json r;
    r["paradigm"] = run.paradigm;
    r["seed"] = run.seed;
    r["failed"] = run.failed;
    r["error"] = run.error;
    r["dir"] = fs::relative(run.dir, root).generic_string();
    runs.push_back(r);
  }
  manifest["runs"] = runs;
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("harness: cannot open manifest for writing");
  out << manifest.dump(2) << "\n";
}

}  // namespace

ComparisonReport run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const fs::path root(spec.out_dir);
  fs::create_directories(root);

  // Shared datasets: every (paradigm, seed) run sees the same splits, so
  // differences are attributable to the objective alone.
  const int post_total = spec.dataset.train_n + spec.dataset.eval_n;
  const tasks::Dataset post_all = tasks::generate_dataset(
      post_total, spec.dataset.non_object_fraction, spec.dataset.seed,
      tasks::TaskFamily::kPostTrain, spec.shape.n_contexts, spec.shape.n_items, 0);
  const double eval_fraction =
      static_cast<double>(spec.dataset.eval_n) / static_cast<double>(post_total);
  auto [post_train, post_eval] =
      tasks::split_train_eval(post_all, eval_fraction, spec.dataset.seed ^ 0x65766c6cull);
  tasks::save_jsonl(post_train, root / "post_train.jsonl");
  tasks::save_jsonl(post_eval, root / "post_eval.jsonl");

  std::optional<TabularPolicy> pretrained;
  tasks::Dataset held_train, held_eval;
  double pretrain_iou = -1.0;
  if (spec.pretrain.enabled) {
    const int held_total = spec.pretrain.train_n + spec.pretrain.eval_n;
    const tasks::Dataset held_all = tasks::generate_dataset(
        held_total, 0.0, spec.pretrain.seed, tasks::TaskFamily::kPretrainHeld,
        spec.shape.n_contexts, spec.shape.n_items, 10'000'000);
    const double held_eval_fraction =
        static_cast<double>(spec.pretrain.eval_n) / static_cast<double>(held_total);
    std::tie(held_train, held_eval) =
        tasks::split_train_eval(held_all, held_eval_fraction, spec.pretrain.seed ^ 0x65766c6cull);
    tasks::save_jsonl(held_train, root / "held_train.jsonl");
    tasks::save_jsonl(held_eval, root / "held_eval.jsonl");

    trainer::RunConfig pre_cfg;
    pre_cfg.paradigm = trainer::Paradigm::kSft;
    pre_cfg.steps = spec.pretrain.steps;
    pre_cfg.lr = spec.pretrain.lr;
    pre_cfg.batch_size = spec.pretrain.batch_size;
    pre_cfg.seed = spec.pretrain.seed;
    pre_cfg.shape = spec.shape;
    // Pre-fit against the fixed serialization so the held policy has a
    // single well-defined preferred style.
    pre_cfg.reward.controls.align = false;
    trainer::TrainResult pre = trainer::run_training(pre_cfg, held_train.instances);
    pretrain_iou = trainer::evaluate(pre.policy, held_eval.instances).mean_iou;
    if (pretrain_iou < spec.pretrain.min_iou)
      throw DataError("harness: pre-fit reached mean_iou " + format_double(pretrain_iou) +
                      ", below the required " + format_double(spec.pretrain.min_iou));
    pre.policy.save(root / "pretrain.policy");
    pretrained = std::move(pre.policy);
  }

  ComparisonReport report;
  report.spec = spec;
  report.pretrain_iou = pretrain_iou;

  for (const ParadigmEntry& entry : spec.paradigms) {
    for (uint64_t seed : spec.seeds) {
      RunRecord run;
      run.paradigm = entry.name;
      run.seed = seed;
      run.dir = root / entry.name / ("seed_" + std::to_string(seed));
      try {
        fs::create_directories(run.dir);
        trainer::RunConfig cfg = entry.config;
        cfg.seed = seed;
        cfg.shape = spec.shape;
        cfg.validate();

        auto snapshot_eval = [&](const TabularPolicy& policy, int steps_done) {
          EvalPoint point;
          point.step = steps_done;
          point.post = trainer::evaluate(policy, post_eval.instances);
          if (spec.pretrain.enabled)
            point.held = trainer::evaluate(policy, held_eval.instances);
          return point;
        };

        {
          const TabularPolicy baseline =
              pretrained ? *pretrained
                         : TabularPolicy(Vocab(spec.shape.n_items), spec.shape.n_contexts,
                                         spec.shape.max_len);
          run.evals.push_back(snapshot_eval(baseline, 0));
        }

        trainer::TrainResult result = trainer::run_training(
            cfg, post_train.instances, pretrained ? &*pretrained : nullptr,
            [&](const trainer::StepMetrics& m, const TabularPolicy& policy) {
              run.metrics.push_back(m);
              const int done = m.step + 1;
              if (done % spec.eval_every == 0 && done != cfg.steps)
                run.evals.push_back(snapshot_eval(policy, done));
            });
        if (cfg.steps > 0) run.evals.push_back(snapshot_eval(result.policy, cfg.steps));

        result.policy.save(run.dir / "final.policy");
        write_metrics_jsonl(run.metrics, run.dir / "metrics.jsonl");
        write_evals_jsonl(run.evals, run.dir / "evals.jsonl");
      } catch (const std::exception& e) {
        run.failed = true;
        run.error = e.what();
      }
      report.runs.push_back(std::move(run));
    }
  }

  write_manifest(report, root);
  write_summary_csv(report, root / "summary.csv");
  return report;
}

ForgettingReport forgetting_probe(const ExperimentSpec& spec) {
  if (!spec.pretrain.enabled)
    throw ConfigError("harness: the forgetting probe needs a [pretrain] section");
  ExperimentSpec adjusted = spec;
  adjusted.pretrain.min_iou = std::max(adjusted.pretrain.min_iou, 0.95);

  const ComparisonReport report = run_experiment(adjusted);

  ForgettingReport out;
  out.pretrain_iou = report.pretrain_iou;
  for (const RunRecord& run : report.runs) {
    ForgettingReport::Entry entry;
    entry.paradigm = run.paradigm;
    entry.seed = run.seed;
    entry.failed = run.failed;
    if (!run.failed) {
      const EvalPoint& fin = run.final_eval();
      if (!fin.held)
        throw DataError("harness: forgetting probe run lacks held-family evaluations");
      entry.retention = fin.held->mean_iou;
      entry.post_mean_iou = fin.post.mean_iou;
    }
    out.entries.push_back(entry);
  }
  return out;
}

double ForgettingReport::mean_retention(const std::string& paradigm) const {
  double sum = 0.0;
  int count = 0;
  for (const Entry& entry : entries) {
    if (entry.paradigm != paradigm || entry.failed) continue;
    sum += entry.retention;
    ++count;
  }
  if (count == 0) throw DataError("harness: no successful runs for paradigm '" + paradigm + "'");
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Plot emission
// ---------------------------------------------------------------------------

namespace {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};

void write_svg_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                    const std::string& y_label, const std::vector<Series>& series_list) {
  const double width = 760, height = 460;
  const double left = 72, right = 716, top = 46, bottom = 404;

  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool first = true;
  for (const Series& series : series_list) {
    for (const auto& [x, y] : series.points) {
      if (first) {
        x_min = x_max = x;
        y_min = y_max = y;
        first = false;
      }
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  if (x_max - x_min < 1e-12) {
    x_min -= 1.0;
    x_max += 1.0;
  }
  const double y_pad = std::max(0.05 * (y_max - y_min), 1e-3);
  y_min -= y_pad;
  y_max += y_pad;

  auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (right - left); };
  auto sy = [&](double y) { return bottom - (y - y_min) / (y_max - y_min) * (bottom - top); };
  auto num = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };
  auto coord = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ofstream out(path);
  if (!out) throw IoError("harness: cannot open plot file: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">"
      << title << "</text>\n";

  // Axes and ticks.
  out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
      << bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = x_min + (x_max - x_min) * i / ticks;
    const double fy = y_min + (y_max - y_min) * i / ticks;
    out << "<line x1=\"" << coord(sx(fx)) << "\" y1=\"" << bottom << "\" x2=\"" << coord(sx(fx))
        << "\" y2=\"" << bottom + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << coord(sx(fx)) << "\" y=\"" << bottom + 20
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << num(fx)
        << "</text>\n";
    out << "<line x1=\"" << left - 5 << "\" y1=\"" << coord(sy(fy)) << "\" x2=\"" << left
        << "\" y2=\"" << coord(sy(fy)) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << left - 9 << "\" y=\"" << coord(sy(fy) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << num(fy)
        << "</text>\n";
  }
  out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << x_label
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << (top + bottom) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 18 "
      << (top + bottom) / 2 << ")\">" << y_label << "</text>\n";

  // Series polylines and legend.
  for (size_t s = 0; s < series_list.size(); ++s) {
    const Series& series = series_list[s];
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (series.points.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (const auto& [x, y] : series.points) out << coord(sx(x)) << "," << coord(sy(y)) << " ";
      out << "\"/>\n";
    }
    for (const auto& [x, y] : series.points)
      if (series.points.size() <= 16)
        out << "<circle cx=\"" << coord(sx(x)) << "\" cy=\"" << coord(sy(y))
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    const double ly = top + 16 + 18 * static_cast<double>(s);
    out << "<line x1=\"" << right - 150 << "\" y1=\"" << ly << "\" x2=\"" << right - 122
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << right - 116 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << series.name << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("harness: write failed: " + path.string());
}

std::vector<std::string> paradigm_order(const ComparisonReport& report) {
  std::vector<std::string> order;
  for (const RunRecord& run : report.runs)
    if (std::find(order.begin(), order.end(), run.paradigm) == order.end())
      order.push_back(run.paradigm);
  return order;
}

// Mean of per-seed values at each shared step.
Series averaged_series(const std::string& name,
                       const std::vector<std::vector<std::pair<int, double>>>& per_seed) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& curve : per_seed)
    for (const auto& [step, value] : curve) {
      acc[step].first += value;
      acc[step].second += 1;
    }
  Series series{name, {}};
  for (const auto& [step, sum_count] : acc)
    series.points.emplace_back(static_cast<double>(step),
                               sum_count.first / static_cast<double>(sum_count.second));
  return series;
}

}  // namespace

void emit_plots(const ComparisonReport& report, const fs::path& out_dir) {
  bool any_data = false;
  for (const RunRecord& run : report.runs)
    if (!run.failed && (!run.metrics.empty() || !run.evals.empty())) any_data = true;
  if (!any_data) throw ConfigError("harness: refusing to plot an empty report");

  fs::create_directories(out_dir);

  // Lossless dumps backing every plotted number.
  {
    std::ofstream csv(out_dir / "curves.csv");
    if (!csv) throw IoError("harness: cannot open curves.csv");
    csv << "paradigm,seed,step,loss,mean_rollout_reward,label_reward,a_label_mean,entropy,"
           "grad_norm,smoothed_fraction\n";
    for (const RunRecord& run : report.runs) {
      if (run.failed) continue;
      for (const trainer::StepMetrics& m : run.metrics)
        csv << run.paradigm << "," << run.seed << "," << m.step << "," << format_double(m.loss)
            << "," << format_double(m.mean_rollout_reward) << ","
            << format_double(m.label_reward) << "," << format_double(m.a_label_mean) << ","
            << format_double(m.entropy) << "," << format_double(m.grad_norm) << ","
            << format_double(m.smoothed_fraction) << "\n";
    }
  }
  {
    std::ofstream csv(out_dir / "eval_points.csv");
    if (!csv) throw IoError("harness: cannot open eval_points.csv");
    csv << "paradigm,seed,step,post_mean_iou,post_n_acc,post_format_rate,held_mean_iou\n";
    for (const RunRecord& run : report.runs) {
      if (run.failed) continue;
      for (const EvalPoint& point : run.evals) {
        csv << run.paradigm << "," << run.seed << "," << point.step << ","
            << format_double(point.post.mean_iou) << "," << format_double(point.post.n_acc)
            << "," << format_double(point.post.format_rate) << ",";
        if (point.held) csv << format_double(point.held->mean_iou);
        csv << "\n";
      }
    }
  }

  const std::vector<std::string> order = paradigm_order(report);

  std::vector<Series> entropy_series;
  std::vector<Series> eval_series;
  std::vector<Series> retention_series;
  for (const std::string& paradigm : order) {
    std::vector<std::vector<std::pair<int, double>>> entropy_curves, eval_curves, held_curves;
    for (const RunRecord& run : report.runs) {
      if (run.paradigm != paradigm || run.failed) continue;
      std::vector<std::pair<int, double>> entropy_curve;
      for (const trainer::StepMetrics& m : run.metrics)
        entropy_curve.emplace_back(m.step, m.entropy);
      entropy_curves.push_back(std::move(entropy_curve));
      std::vector<std::pair<int, double>> eval_curve, held_curve;
      for (const EvalPoint& point : run.evals) {
        eval_curve.emplace_back(point.step, point.post.mean_iou);
        if (point.held) held_curve.emplace_back(point.step, point.held->mean_iou);
      }
      eval_curves.push_back(std::move(eval_curve));
      if (!held_curve.empty()) held_curves.push_back(std::move(held_curve));
    }
    Series entropy = averaged_series(paradigm, entropy_curves);
    if (!entropy.points.empty()) entropy_series.push_back(std::move(entropy));
    Series eval = averaged_series(paradigm, eval_curves);
    if (!eval.points.empty()) eval_series.push_back(std::move(eval));
    Series held = averaged_series(paradigm, held_curves);
    if (!held.points.empty()) retention_series.push_back(std::move(held));
  }

  if (!entropy_series.empty())
    write_svg_plot(out_dir / "entropy_vs_step.svg", report.spec.name + ": policy entropy",
                   "step", "entropy (nats/token)", entropy_series);
  if (!eval_series.empty())
    write_svg_plot(out_dir / "eval_vs_step.svg", report.spec.name + ": evaluation mean IoU",
                   "steps completed", "mean IoU", eval_series);
  if (!retention_series.empty())
    write_svg_plot(out_dir / "retention_vs_step.svg",
                   report.spec.name + ": held-family retention", "steps completed",
                   "held mean IoU", retention_series);
}

ComparisonReport load_experiment(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("harness: cannot open manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("harness: bad manifest: " + std::string(e.what()));
  }

  ComparisonReport report;
  report.spec.name = manifest.at("name").get<std::string>();
  report.spec.out_dir = dir.string();
  report.spec.eval_every = manifest.at("eval_every").get<int>();
  report.spec.seeds = manifest.at("seeds").get<std::vector<uint64_t>>();
  report.pretrain_iou = manifest.at("pretrain_iou").get<double>();
  for (const auto& p : manifest.at("paradigms")) {
    ParadigmEntry entry;
    entry.name = p.at("name").get<std::string>();
    entry.config.paradigm = trainer::paradigm_from_name(p.at("type").get<std::string>());
    entry.config.steps = p.at("steps").get<int>();
    report.spec.paradigms.push_back(std::move(entry));
  }
  for (const auto& r : manifest.at("runs")) {
    RunRecord run;
    run.paradigm = r.at("paradigm").get<std::string>();
    run.seed = r.at("seed").get<uint64_t>();
    run.failed = r.at("failed").get<bool>();
    run.error = r.at("error").get<std::string>();
    run.dir = dir / r.at("dir").get<std::string>();
    if (!run.failed) {
      run.metrics = read_metrics_jsonl(run.dir / "metrics.jsonl");
      run.evals = read_evals_jsonl(run.dir / "evals.jsonl");
    }
    report.runs.push_back(std::move(run));
  }
  return report;
}

}  // namespace visurf::harness
