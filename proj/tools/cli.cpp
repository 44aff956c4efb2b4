#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "emadapt/adapt.hpp"
#include "emadapt/config.hpp"
#include "emadapt/error.hpp"
#include "emadapt/io.hpp"
#include "emadapt/mmd.hpp"
#include "emadapt/pretrain.hpp"
#include "emadapt/segeval.hpp"
#include "emadapt/stats.hpp"
#include "emadapt/synthdomains.hpp"
#include "emadapt/text.hpp"
#include "emadapt/uncertainty.hpp"
#include "emadapt/version.hpp"

namespace fs = std::filesystem;

namespace emadapt::cli {

namespace {

bool is_config_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kParse:
    case ErrorCode::kInvalidSteps:
    case ErrorCode::kInsufficientTrainingBudget:
    case ErrorCode::kInvalidBatch:
    case ErrorCode::kSpecInfeasible:
      return true;
    default:
      return false;
  }
}

// Collects inputs and outputs for the manifest.
class Manifest {
 public:
  Manifest(std::string subcommand, std::vector<std::string> args, int threads)
      : subcommand_(std::move(subcommand)), args_(std::move(args)), threads_(threads) {}

  void config(const std::string& key, Json value) { config_[key] = std::move(value); }

  void input_file(const fs::path& p) {
    inputs_.push_back(Json{{"path", p.generic_string()}, {"git_blob", git_blob_hash(read_file(p))}});
  }

  void input_tree(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) input_file(f);
  }

  // Writes the file and records its hash.
  void output(const fs::path& p, const std::string& text) {
    write_text(p, text);
    outputs_.push_back(Json{{"path", p.generic_string()}, {"git_blob", git_blob_hash(text)}});
  }

  void output_existing(const fs::path& p) {
    outputs_.push_back(Json{{"path", p.generic_string()}, {"git_blob", git_blob_hash(read_file(p))}});
  }

  void write(const fs::path& p) const {
    Json j{{"tool", "emadapt"},
           {"version", kVersion},
           {"subcommand", subcommand_},
           {"arguments", args_},
           {"threads", threads_},
           {"config", config_},
           {"inputs", inputs_},
           {"outputs", outputs_}};
    write_text(p, dump_json(j));
  }

 private:
  std::string subcommand_;
  std::vector<std::string> args_;
  int threads_;
  Json config_ = Json::object();
  Json inputs_ = Json::array();
  Json outputs_ = Json::array();
};

Json load_json_file(const fs::path& p) { return parse_json(read_text(p)); }

fs::path checkpoint_prefix(const fs::path& models, const std::string& domain) {
  return models / domain;
}

void add_checkpoint_inputs(Manifest& m, const fs::path& prefix) {
  m.input_file(fs::path(prefix.string() + ".json"));
  m.input_file(fs::path(prefix.string() + ".bin"));
}

// Domains under `data` having a `split` folder, sorted by name.
std::vector<std::string> list_domains(const fs::path& data, const std::string& split) {
  std::vector<std::string> names;
  if (!fs::is_directory(data)) throw Error(ErrorCode::kIo, "not a directory: " + data.string());
  for (const auto& e : fs::directory_iterator(data)) {
    if (e.is_directory() && fs::is_directory(e.path() / split)) {
      names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& part : split(text, ',')) {
    const long long v = parse_int(trim(part));
    if (v < 0) throw Error(ErrorCode::kInvalidConfig, "seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  if (seeds.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one seed required");
  return seeds;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& part : split(text, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

Json records_json(std::span<const RunRecord> records) {
  Json arr = Json::array();
  for (const auto& r : records) arr.push_back(r);
  return arr;
}

// Group file: header "item,group".
Clustering load_grouping(const fs::path& p) {
  const auto rows = parse_csv(read_text(p));
  if (rows.empty()) throw Error(ErrorCode::kParse, "empty grouping file");
  std::vector<std::string> items;
  std::vector<std::string> groups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw Error(ErrorCode::kParse, "grouping rows need item,group");
    items.push_back(rows[i][0]);
    groups.push_back(rows[i][1]);
  }
  std::map<std::string, int> ids;
  std::vector<int> assignment;
  for (const auto& g : groups) {
    auto it = ids.emplace(g, static_cast<int>(ids.size())).first;
    assignment.push_back(it->second);
  }
  return make_clustering(items, assignment);
}

std::string grouping_csv(const Clustering& c, const std::string& prefix) {
  std::string out = "item,group\n";
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    out += c.items[i] + "," + prefix + std::to_string(c.assignment[i]) + "\n";
  }
  return out;
}

struct Context {
  std::vector<std::string> args;
  int threads = 1;
  std::ostream* out = nullptr;
};

// --- synth-gen -------------------------------------------------------------

struct SynthOpts {
  std::string spec;
  std::string out;
};

void run_synth_gen(const SynthOpts& o, const Context& ctx) {
  const Json spec = load_json_file(o.spec);
  for (const auto& [key, v] : spec.items()) {
    if (key != "samples" && key != "test_samples" && key != "benchmark" && key != "domains") {
      throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in synth spec");
    }
  }
  const int samples = spec.value("samples", 40);
  const int test_samples = spec.value("test_samples", 12);
  if (samples < 1 || test_samples < 0) {
    throw Error(ErrorCode::kInvalidConfig, "samples must be >= 1 and test_samples >= 0");
  }
  std::vector<DomainSpec> specs;
  std::optional<Clustering> families;
  Json resolved_bench;
  if (spec.contains("benchmark")) {
    const Json& b = spec.at("benchmark");
    for (const auto& [key, v] : b.items()) {
      if (key != "family_sizes" && key != "seed" && key != "image_size") {
        throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in benchmark");
      }
    }
    const std::vector<int> sizes = b.value("family_sizes", std::vector<int>{2, 2, 2});
    const std::uint64_t seed = b.value("seed", std::uint64_t{0});
    const int image_size = b.value("image_size", 64);
    Benchmark bench = make_benchmark(sizes, seed, image_size);
    specs = bench.specs;
    families = bench.families;
    resolved_bench = Json{{"family_sizes", sizes}, {"seed", seed}, {"image_size", image_size}};
  }
  if (spec.contains("domains")) {
    for (const auto& d : spec.at("domains")) {
      DomainSpec s;
      from_json(d, s);
      specs.push_back(s);
    }
  }
  if (specs.empty()) throw Error(ErrorCode::kInvalidConfig, "synth spec defines no domains");

  Manifest m("synth-gen", ctx.args, ctx.threads);
  m.input_file(o.spec);
  Json resolved = Json::array();
  const fs::path out(o.out);
  for (const auto& s : specs) {
    s.validate();
    resolved.push_back(s);
    std::vector<Sample> train;
    std::vector<Sample> test;
    for (int i = 0; i < samples + test_samples; ++i) {
      Sample smp = generate_sample(s, static_cast<std::size_t>(i));
      (i < samples ? train : test).push_back(std::move(smp));
    }
    save_domain_split(DomainPool(s.name, std::move(train)), out, "train");
    if (test_samples > 0) save_domain_split(DomainPool(s.name, std::move(test)), out, "test");
    m.output_existing(out / s.name / "train" / "artifacts.csv");
  }
  m.config("samples", samples);
  m.config("test_samples", test_samples);
  if (!resolved_bench.is_null()) m.config("benchmark", resolved_bench);
  m.config("domains", resolved);
  m.output(out / "specs.json", dump_json(resolved));
  if (families) m.output(out / "families.csv", grouping_csv(*families, "family"));
  m.write(out / "manifest.json");
  *ctx.out << "generated " << specs.size() << " domains in " << out.generic_string() << "\n";
}

// --- pretrain --------------------------------------------------------------

struct PretrainOpts {
  std::string data;
  std::string domain;
  std::string out;
  std::string config;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
};

void run_pretrain(const PretrainOpts& o, const Context& ctx) {
  PretrainJob job;
  job.domain = o.domain;
  WatershedConfig ws;
  if (!o.config.empty()) {
    const Json c = load_json_file(o.config);
    for (const auto& [key, v] : c.items()) {
      if (key == "model") {
        from_json(v, job.model);
      } else if (key == "train") {
        from_json(v, job.train);
      } else if (key == "steps") {
        job.steps = v.get<int>();
      } else if (key == "train_fraction") {
        job.train_fraction = v.get<double>();
      } else if (key == "watershed") {
        from_json(v, ws);
      } else {
        throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in pretrain config");
      }
    }
  }
  if (o.steps) job.steps = *o.steps;
  if (o.seed) job.train.seed = *o.seed;
  job.output = o.out;
  job.validate();
  ws.validate();

  const DomainPool pool = load_domain_split(o.data, o.domain, "train");
  Manifest m("pretrain", ctx.args, ctx.threads);
  m.input_tree(fs::path(o.data) / o.domain / "train");
  const PretrainResult r = pretrain_domain(pool, job, ws);
  m.config("model", job.model);
  m.config("train", job.train);
  m.config("steps", job.steps);
  m.config("train_fraction", job.train_fraction);
  m.config("watershed", ws);
  m.output_existing(o.out + ".bin");
  m.output_existing(o.out + ".json");
  Json summary{{"domain", o.domain},
               {"final_loss", r.final_loss},
               {"n_train", r.n_train},
               {"n_val", r.n_val},
               {"model_hash", r.model.hash()}};
  if (r.heldout_vi) summary["heldout_vi"] = *r.heldout_vi;
  m.output(o.out + ".pretrain.json", dump_json(summary));
  m.write(o.out + ".manifest.json");
  *ctx.out << "pretrained " << o.domain << " final_loss=" << format_real(r.final_loss);
  if (r.heldout_vi) *ctx.out << " heldout_vi=" << format_real(r.heldout_vi->vi_total);
  *ctx.out << "\n";
}

// --- embed -----------------------------------------------------------------

struct EmbedOpts {
  std::string model;
  std::string data;
  std::string domain;
  std::string split = "train";
  std::string out;
};

void run_embed(const EmbedOpts& o, const Context& ctx) {
  const ModelParams model = load_checkpoint(o.model);
  const DomainPool pool = load_domain_split(o.data, o.domain, o.split);
  Manifest m("embed", ctx.args, ctx.threads);
  add_checkpoint_inputs(m, o.model);
  m.input_tree(fs::path(o.data) / o.domain / o.split);
  const fs::path out(o.out);
  const std::string hash = model.hash();
  for (const Sample& s : pool.samples()) {
    save_embedding({s.id, hash, embed(model, s.image)}, out / s.id);
    m.output_existing(out / (s.id + ".f32"));
    m.output_existing(out / (s.id + ".json"));
  }
  m.config("split", o.split);
  m.write(out / "manifest.json");
  *ctx.out << "embedded " << pool.size() << " images\n";
}

// --- mmd-matrix ------------------------------------------------------------

struct MatrixOpts {
  std::string data;
  std::string models;
  std::string domains;
  std::string split = "train";
  std::string out;
  std::size_t sample_cap = 32;
  std::uint64_t seed = 0;
  std::string estimator = "biased";
  std::optional<double> bandwidth;
};

void run_mmd_matrix(const MatrixOpts& o, const Context& ctx) {
  KernelConfig kernel;
  kernel.bandwidth = o.bandwidth;
  kernel.validate();
  const MmdEstimator est = parse_estimator(o.estimator);
  std::vector<std::string> names =
      o.domains.empty() ? list_domains(o.data, o.split) : split_list(o.domains);
  Manifest m("mmd-matrix", ctx.args, ctx.threads);
  std::vector<DomainPool> pools;
  std::vector<ModelParams> models;
  for (const auto& n : names) {
    const fs::path prefix = checkpoint_prefix(o.models, n);
    if (!fs::exists(prefix.string() + ".json")) {
      throw Error(ErrorCode::kMissingModel, "no checkpoint for domain '" + n + "'");
    }
    pools.push_back(load_domain_split(o.data, n, o.split));
    models.push_back(load_checkpoint(prefix));
    m.input_tree(fs::path(o.data) / n / o.split);
    add_checkpoint_inputs(m, prefix);
  }
  const DistanceMatrix dm = domain_distance_matrix(pools, models, kernel, o.sample_cap, o.seed, est);
  m.config("kernel", kernel);
  m.config("estimator", to_string(est));
  m.config("sample_cap", o.sample_cap);
  m.config("seed", o.seed);
  m.config("split", o.split);
  const fs::path out(o.out);
  m.output(out / "matrix.csv", matrix_to_csv(dm));
  Json j{{"names", dm.names},           {"entries", dm.entries},
         {"sigmas", dm.sigmas},         {"embedder_ids", dm.embedder_ids},
         {"estimator", to_string(est)}, {"kernel", dm.kernel},
         {"sample_cap", dm.sample_cap}, {"seed", dm.seed}};
  m.output(out / "matrix.json", dump_json(j));
  m.write(out / "manifest.json");
  *ctx.out << matrix_to_csv(dm);
}

// --- ods -------------------------------------------------------------------

struct OdsOpts {
  std::string matrix;
  std::string target;
  std::string candidates;
  bool worst = false;
  std::string out;
};

void run_ods(const OdsOpts& o, const Context& ctx) {
  const DistanceMatrix dm = matrix_from_csv(read_text(o.matrix));
  std::vector<std::string> cands = split_list(o.candidates);
  if (o.candidates.empty()) {
    dm.index_of(o.target);
    for (const auto& n : dm.names) {
      if (n != o.target) cands.push_back(n);
    }
  }
  const std::string pick = o.worst ? select_worst_source(dm, o.target, cands)
                                   : select_optimal_source(dm, o.target, cands);
  if (!o.out.empty()) {
    Manifest m("ods", ctx.args, ctx.threads);
    m.input_file(o.matrix);
    m.config("target", o.target);
    m.config("candidates", cands);
    m.config("criterion", o.worst ? "max" : "min");
    Json j{{"target", o.target},
           {"source", pick},
           {"distance", dm.at(pick, o.target)},
           {"criterion", o.worst ? "max" : "min"}};
    m.output(fs::path(o.out) / "ods.json", dump_json(j));
    m.write(fs::path(o.out) / "manifest.json");
  }
  *ctx.out << pick << "\n";
}

// --- audit-uncertainty -----------------------------------------------------

struct AuditOpts {
  std::string model;
  std::string data;
  std::string domain;
  std::string split = "train";
  std::string out;
  int k_passes = 10;
  std::uint64_t seed = 0;
};

void run_audit(const AuditOpts& o, const Context& ctx) {
  UncertaintyConfig uc;
  uc.k_passes = o.k_passes;
  uc.validate();
  const ModelParams model = load_checkpoint(o.model);
  DomainPool pool = load_domain_split(o.data, o.domain, o.split);
  pool.reset_to_unlabeled();
  Manifest m("audit-uncertainty", ctx.args, ctx.threads);
  add_checkpoint_inputs(m, o.model);
  m.input_tree(fs::path(o.data) / o.domain / o.split);
  const auto scores = rank_pool_by_uncertainty(model, pool, uc, o.seed);

  std::string csv = "rank,image_id,u,white_stripe,black_tile,contrast\n";
  for (std::size_t r = 0; r < scores.size(); ++r) {
    const auto& a = pool.sample(scores[r].index).artifacts;
    csv += std::to_string(r + 1) + "," + scores[r].image_id + "," + format_real(scores[r].u) + "," +
           (a.white_stripe ? "1" : "0") + "," + (a.black_tile ? "1" : "0") + "," +
           (a.contrast ? "1" : "0") + "\n";
  }
  Json tests = Json::object();
  auto test_flag = [&](const std::string& name, auto flagged) {
    std::vector<double> with;
    std::vector<double> without;
    for (const auto& s : scores) (flagged(pool.sample(s.index).artifacts) ? with : without).push_back(s.u);
    if (with.empty() || without.empty()) return;
    const auto mw = mann_whitney_u(with, without, Alternative::kGreater);
    tests[name] = Json{{"n_flagged", with.size()}, {"n_clean", without.size()},
                       {"u", mw.u_a},             {"p_value", mw.p_value},
                       {"exact", mw.exact},       {"alternative", "greater"}};
  };
  test_flag("white_stripe", [](const ArtifactFlags& a) { return a.white_stripe; });
  test_flag("black_tile", [](const ArtifactFlags& a) { return a.black_tile; });
  test_flag("contrast", [](const ArtifactFlags& a) { return a.contrast; });
  test_flag("any", [](const ArtifactFlags& a) { return a.any(); });

  m.config("uncertainty", uc);
  m.config("seed", o.seed);
  m.config("split", o.split);
  const fs::path out(o.out);
  m.output(out / "uncertainty.csv", csv);
  m.output(out / "artifact_tests.json", dump_json(tests));
  m.write(out / "manifest.json");
  *ctx.out << "scored " << scores.size() << " images\n";
}

// --- adapt / grid ----------------------------------------------------------

struct Experiment {
  fs::path data;
  fs::path models;
  std::vector<std::string> domains;
  GridConfig grid;
};

std::vector<GridDomain> load_grid_domains(const Experiment& e, std::vector<DomainPool>& trains,
                                          std::vector<DomainPool>& tests,
                                          std::vector<ModelParams>& models, Manifest& m) {
  const std::vector<std::string> names =
      e.domains.empty() ? list_domains(e.data, "train") : e.domains;
  trains.clear();
  tests.clear();
  models.clear();
  trains.reserve(names.size());
  tests.reserve(names.size());
  models.reserve(names.size());
  std::vector<GridDomain> out;
  for (const auto& n : names) {
    const bool is_target =
        std::find(e.grid.targets.begin(), e.grid.targets.end(), n) != e.grid.targets.end();
    const fs::path prefix = checkpoint_prefix(e.models, n);
    const bool has_model = fs::exists(prefix.string() + ".json");
    if (!is_target && !has_model) continue;
    trains.push_back(load_domain_split(e.data, n, "train"));
    m.input_tree(e.data / n / "train");
    if (is_target) {
      tests.push_back(load_domain_split(e.data, n, "test"));
      m.input_tree(e.data / n / "test");
    } else {
      tests.emplace_back();
    }
    if (has_model) {
      models.push_back(load_checkpoint(prefix));
      add_checkpoint_inputs(m, prefix);
    } else {
      models.emplace_back();
    }
    out.push_back({n, &trains.back(), is_target ? &tests.back() : nullptr,
                   has_model ? &models.back() : nullptr});
  }
  return out;
}

void write_grid_outputs(const std::vector<RunRecord>& records, const GridConfig& grid,
                        const fs::path& out, Manifest& m, std::ostream& os) {
  m.output(out / "records.csv", records_to_csv(records));
  const std::string table = results_table_csv(records);
  m.output(out / "table.csv", table);
  m.output(out / "runs.json", dump_json(records_json(records)));
  Json cfg;
  cfg["grid"] = grid;
  write_run_manifest(cfg, records, out / "summary.json");
  m.output_existing(out / "summary.json");
  m.output_existing(out / "summary.csv");
  const bool active = std::find(grid.modes.begin(), grid.modes.end(), AdaptMode::kActiveMinMmd) !=
                      grid.modes.end();
  if (active && grid.samplers.size() > 1) {
    std::vector<std::string> names;
    for (auto s : grid.samplers) names.push_back(to_string(s));
    const auto results = sampler_results(records);
    const EfficacyReport rep = sampler_efficacy(results, names);
    m.output(out / "efficacy.csv", efficacy_to_csv(rep));
  }
  m.write(out / "manifest.json");
  os << table;
}

struct AdaptOpts {
  std::string data;
  std::string models;
  std::string target;
  std::string mode = "active-minMMD";
  std::string sampler;
  std::optional<int> a;
  std::optional<int> b;
  std::optional<int> t;
  std::string seeds;
  std::string config;
  std::string out;
};

void read_experiment_settings(const Json& c, Experiment& e, const fs::path& base) {
  for (const auto& [key, v] : c.items()) {
    if (key == "data_dir") {
      e.data = base / v.get<std::string>();
    } else if (key == "models_dir") {
      e.models = base / v.get<std::string>();
    } else if (key == "domains") {
      e.domains = v.get<std::vector<std::string>>();
    } else if (key == "grid") {
      from_json(v, e.grid);
    } else if (key != "out_dir") {
      throw Error(ErrorCode::kInvalidConfig, "unknown key '" + key + "' in experiment config");
    }
  }
}

void run_adapt(const AdaptOpts& o, const Context& ctx) {
  Experiment e;
  e.grid.modes = {parse_mode(o.mode)};
  if (!o.config.empty()) {
    const Json c = load_json_file(o.config);
    read_experiment_settings(c, e, fs::path(o.config).parent_path());
    e.grid.modes = {parse_mode(o.mode)};
  }
  if (!o.data.empty()) e.data = o.data;
  if (!o.models.empty()) e.models = o.models;
  if (e.data.empty() || e.models.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "--data and --models are required");
  }
  e.grid.targets = {o.target};
  if (!o.sampler.empty()) e.grid.samplers = {parse_sampler(o.sampler)};
  if (o.a) e.grid.sample_sizes = {*o.a};
  if (o.b) e.grid.base.train_steps = *o.b;
  if (o.t) e.grid.base.iterations = *o.t;
  if (!o.seeds.empty()) e.grid.seeds = parse_seeds(o.seeds);
  e.grid.validate();
  for (int a : e.grid.sample_sizes) {
    AdaptConfig probe = e.grid.base;
    probe.annotations = a;
    probe.validate();
  }

  Manifest m("adapt", ctx.args, ctx.threads);
  if (!o.config.empty()) m.input_file(o.config);
  std::vector<DomainPool> trains, tests;
  std::vector<ModelParams> models;
  const auto domains = load_grid_domains(e, trains, tests, models, m);
  m.config("grid", e.grid);
  const auto records = run_experiment_grid(domains, e.grid);
  write_grid_outputs(records, e.grid, o.out, m, *ctx.out);
}

struct GridOpts {
  std::string config;
  std::string out;
};

void run_grid(const GridOpts& o, const Context& ctx) {
  const Json c = load_json_file(o.config);
  Experiment e;
  const fs::path base = fs::path(o.config).parent_path();
  read_experiment_settings(c, e, base);
  fs::path out = o.out;
  if (out.empty()) {
    if (!c.contains("out_dir")) throw Error(ErrorCode::kInvalidConfig, "no out_dir given");
    out = base / c.at("out_dir").get<std::string>();
  }
  if (e.data.empty() || e.models.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "data_dir and models_dir are required");
  }
  e.grid.validate();
  for (int a : e.grid.sample_sizes) {
    AdaptConfig probe = e.grid.base;
    probe.annotations = a;
    probe.validate();
  }
  Manifest m("grid", ctx.args, ctx.threads);
  m.input_file(o.config);
  std::vector<DomainPool> trains, tests;
  std::vector<ModelParams> models;
  const auto domains = load_grid_domains(e, trains, tests, models, m);
  m.config("grid", e.grid);
  const auto records = run_experiment_grid(domains, e.grid);
  write_grid_outputs(records, e.grid, out, m, *ctx.out);
}

// --- evaluate --------------------------------------------------------------

struct EvalOpts {
  std::string model;
  std::string data;
  std::string domain;
  std::string split = "test";
  std::string config;
  std::string out;
  bool include_membrane = false;
};

void run_evaluate(const EvalOpts& o, const Context& ctx) {
  WatershedConfig ws;
  if (!o.config.empty()) from_json(load_json_file(o.config), ws);
  ws.validate();
  const ModelParams model = load_checkpoint(o.model);
  const DomainPool pool = load_domain_split(o.data, o.domain, o.split);
  Manifest m("evaluate", ctx.args, ctx.threads);
  add_checkpoint_inputs(m, o.model);
  m.input_tree(fs::path(o.data) / o.domain / o.split);
  if (!o.config.empty()) m.input_file(o.config);
  const Evaluation ev = evaluate_model(model, pool, ws, !o.include_membrane);
  m.config("watershed", ws);
  m.config("ignore_gt_zero", !o.include_membrane);
  m.config("split", o.split);
  const fs::path out(o.out);
  m.output(out / "per_image.csv", evaluation_to_csv(ev));
  Json summary{{"domain", o.domain},
               {"images", ev.per_image.size()},
               {"mean", ev.mean},
               {"model_hash", model.hash()}};
  m.output(out / "summary.json", dump_json(summary));
  m.write(out / "manifest.json");
  *ctx.out << "mean vi_total=" << format_real(ev.mean.vi_total) << "\n";
}

// --- cluster ---------------------------------------------------------------

struct ClusterOpts {
  std::string matrix;
  std::vector<int> ks;
  std::string reference;
  std::string permutation = "exact";
  std::uint64_t n_perm = 20000;
  std::uint64_t seed = 0;
  std::string out;
};

void run_cluster(const ClusterOpts& o, const Context& ctx) {
  PermutationOptions popt;
  if (o.permutation == "exact") {
    popt.mode = PermutationMode::kExact;
  } else if (o.permutation == "monte-carlo") {
    popt.mode = PermutationMode::kMonteCarlo;
  } else {
    throw Error(ErrorCode::kInvalidConfig, "permutation must be exact or monte-carlo");
  }
  popt.n_permutations = o.n_perm;
  popt.seed = o.seed;

  const DistanceMatrix sym = symmetrize(matrix_from_csv(read_text(o.matrix)));
  const Dendrogram d = agglomerative_cluster(sym);
  Manifest m("cluster", ctx.args, ctx.threads);
  m.input_file(o.matrix);
  std::optional<Clustering> ref;
  if (!o.reference.empty()) {
    m.input_file(o.reference);
    ref = load_grouping(o.reference);
  }
  std::vector<int> ks = o.ks;
  if (ks.empty()) ks = {ref ? ref->k : 2};

  std::string clusters = "item";
  for (int k : ks) clusters += ",k" + std::to_string(k);
  clusters += "\n";
  std::vector<Clustering> cuts;
  for (int k : ks) cuts.push_back(cut_at_k(d, k));
  for (std::size_t i = 0; i < d.leaves.size(); ++i) {
    clusters += d.leaves[i];
    for (const auto& c : cuts) clusters += "," + std::to_string(c.assignment[i]);
    clusters += "\n";
  }
  Json agreement = Json::array();
  if (ref) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto r = permutation_test_fm(*ref, cuts[i], popt);
      agreement.push_back(Json{{"k", ks[i]},
                               {"fowlkes_mallows", r.observed_fm},
                               {"p_value", r.p_value},
                               {"at_least", r.at_least},
                               {"total", r.total},
                               {"mode", to_string(r.mode)}});
    }
  }
  m.config("linkage", d.linkage);
  m.config("ks", ks);
  m.config("permutation", to_string(popt.mode));
  m.config("n_perm", o.n_perm);
  m.config("seed", o.seed);
  const fs::path out(o.out);
  const std::string text = dendrogram_to_text(d);
  m.output(out / "dendrogram.txt", text);
  m.output(out / "dendrogram.json", dump_json(Json(d)));
  m.output(out / "clusters.csv", clusters);
  if (ref) m.output(out / "agreement.json", dump_json(agreement));
  m.write(out / "manifest.json");
  *ctx.out << text;
  for (const auto& a : agreement) {
    *ctx.out << "k=" << a["k"].get<int>() << " FM=" << format_real(a["fowlkes_mallows"].get<double>())
             << " p=" << format_real(a["p_value"].get<double>()) << "\n";
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active domain adaptation toolkit for EM membrane segmentation", "emadapt"};
  app.require_subcommand(1);
  Context ctx;
  ctx.args = args;
  ctx.out = &out;
  app.add_option("--threads", ctx.threads, "Worker cap (runs are single-threaded)")
      ->check(CLI::PositiveNumber);
  app.set_version_flag("--version", std::string(kVersion));

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth-gen", "Generate synthetic domains from a JSON spec");
  c_synth->add_option("--spec", synth.spec, "Spec JSON")->required();
  c_synth->add_option("--out", synth.out, "Output root")->required();

  PretrainOpts pre;
  auto* c_pre = app.add_subcommand("pretrain", "Train a source model on one domain");
  c_pre->add_option("--data", pre.data, "Data root")->required();
  c_pre->add_option("--domain", pre.domain, "Domain name")->required();
  c_pre->add_option("--out", pre.out, "Checkpoint prefix")->required();
  c_pre->add_option("--config", pre.config, "Pretrain config JSON");
  c_pre->add_option("--steps", pre.steps, "Gradient steps");
  c_pre->add_option("--seed", pre.seed, "Training seed");

  EmbedOpts emb;
  auto* c_emb = app.add_subcommand("embed", "Cache bottleneck embeddings of a domain split");
  c_emb->add_option("--model", emb.model, "Checkpoint prefix")->required();
  c_emb->add_option("--data", emb.data, "Data root")->required();
  c_emb->add_option("--domain", emb.domain, "Domain name")->required();
  c_emb->add_option("--split", emb.split, "Split name");
  c_emb->add_option("--out", emb.out, "Output directory")->required();

  MatrixOpts mat;
  auto* c_mat = app.add_subcommand("mmd-matrix", "Pairwise squared MMD between domains");
  c_mat->add_option("--data", mat.data, "Data root")->required();
  c_mat->add_option("--models", mat.models, "Checkpoint directory (<domain>.json/.bin)")->required();
  c_mat->add_option("--domains", mat.domains, "Comma-separated domain list");
  c_mat->add_option("--split", mat.split, "Split name");
  c_mat->add_option("--sample-cap", mat.sample_cap, "Images per domain");
  c_mat->add_option("--seed", mat.seed, "Subsample seed");
  c_mat->add_option("--estimator", mat.estimator, "biased or unbiased");
  c_mat->add_option("--bandwidth", mat.bandwidth, "RBF sigma (default: median heuristic)");
  c_mat->add_option("--out", mat.out, "Output directory")->required();

  OdsOpts ods;
  auto* c_ods = app.add_subcommand("ods", "Pick the source domain closest to a target");
  c_ods->add_option("--matrix", ods.matrix, "Distance CSV")->required();
  c_ods->add_option("--target", ods.target, "Target domain")->required();
  c_ods->add_option("--candidates", ods.candidates, "Comma-separated candidates");
  c_ods->add_flag("--worst", ods.worst, "Pick the farthest source instead");
  c_ods->add_option("--out", ods.out, "Optional output directory");

  AuditOpts aud;
  auto* c_aud = app.add_subcommand("audit-uncertainty", "Rank images by MC-dropout entropy");
  c_aud->add_option("--model", aud.model, "Checkpoint prefix")->required();
  c_aud->add_option("--data", aud.data, "Data root")->required();
  c_aud->add_option("--domain", aud.domain, "Domain name")->required();
  c_aud->add_option("--split", aud.split, "Split name");
  c_aud->add_option("--k-passes", aud.k_passes, "Stochastic passes");
  c_aud->add_option("--seed", aud.seed, "Dropout seed");
  c_aud->add_option("--out", aud.out, "Output directory")->required();

  AdaptOpts ad;
  auto* c_ad = app.add_subcommand("adapt", "Run active adaptation on one target");
  c_ad->add_option("--data", ad.data, "Data root");
  c_ad->add_option("--models", ad.models, "Checkpoint directory");
  c_ad->add_option("--target", ad.target, "Target domain")->required();
  c_ad->add_option("--mode", ad.mode, "scratch | passive-minMMD | active-maxMMD | active-minMMD");
  c_ad->add_option("--sampler", ad.sampler, "random | min-unc | max-unc | median-unc | badge | clue");
  c_ad->add_option("-A", ad.a, "Annotation budget");
  c_ad->add_option("-B", ad.b, "Training budget (steps)");
  c_ad->add_option("-T", ad.t, "Active iterations");
  c_ad->add_option("--seeds", ad.seeds, "Comma-separated seeds");
  c_ad->add_option("--config", ad.config, "Experiment config JSON");
  c_ad->add_option("--out", ad.out, "Output directory")->required();

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("evaluate", "Watershed + VI of a model on a split");
  c_ev->add_option("--model", ev.model, "Checkpoint prefix")->required();
  c_ev->add_option("--data", ev.data, "Data root")->required();
  c_ev->add_option("--domain", ev.domain, "Domain name")->required();
  c_ev->add_option("--split", ev.split, "Split name");
  c_ev->add_option("--config", ev.config, "Watershed config JSON");
  c_ev->add_flag("--include-membrane", ev.include_membrane, "Count gt membrane pixels in VI");
  c_ev->add_option("--out", ev.out, "Output directory")->required();

  GridOpts grid;
  auto* c_grid = app.add_subcommand("grid", "Run an experiment grid from a config");
  c_grid->add_option("--config", grid.config, "Experiment config JSON")->required();
  c_grid->add_option("--out", grid.out, "Output directory (overrides out_dir)");

  ClusterOpts cl;
  auto* c_cl = app.add_subcommand("cluster", "UPGMA clustering of a distance matrix");
  c_cl->add_option("--matrix", cl.matrix, "Distance CSV")->required();
  c_cl->add_option("--k", cl.ks, "Cluster counts")->delimiter(',');
  c_cl->add_option("--reference", cl.reference, "Reference grouping CSV (item,group)");
  c_cl->add_option("--permutation", cl.permutation, "exact or monte-carlo");
  c_cl->add_option("--n-perm", cl.n_perm, "Monte Carlo permutations");
  c_cl->add_option("--seed", cl.seed, "Monte Carlo seed");
  c_cl->add_option("--out", cl.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: Usage: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*c_synth) run_synth_gen(synth, ctx);
    else if (*c_pre) run_pretrain(pre, ctx);
    else if (*c_emb) run_embed(emb, ctx);
    else if (*c_mat) run_mmd_matrix(mat, ctx);
    else if (*c_ods) run_ods(ods, ctx);
    else if (*c_aud) run_audit(aud, ctx);
    else if (*c_ad) run_adapt(ad, ctx);
    else if (*c_ev) run_evaluate(ev, ctx);
    else if (*c_grid) run_grid(grid, ctx);
    else if (*c_cl) run_cluster(cl, ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_config_error(e.code()) ? 3 : 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: InvalidConfig: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: Runtime: " << msg << "\n";
    return 1;
  }
  return 0;
}

}  // namespace emadapt::cli
