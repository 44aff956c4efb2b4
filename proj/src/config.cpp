#include "emadapt/config.hpp"

#include <map>
#include <set>
#include <tuple>

#include "emadapt/error.hpp"
#include "emadapt/io.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidConfig, std::string(what) + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw Error(ErrorCode::kInvalidConfig, std::string("unknown key '") + key + "' in " + what);
    }
  }
}

template <class T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"depth", c.depth},
           {"base_channels", c.base_channels},
           {"num_classes", c.num_classes},
           {"dropout_rate", c.dropout_rate},
           {"input_size", c.input_size}};
}

void from_json(const Json& j, ModelConfig& c) {
  check_keys(j, {"depth", "base_channels", "num_classes", "dropout_rate", "input_size"}, "model");
  read(j, "depth", c.depth);
  read(j, "base_channels", c.base_channels);
  read(j, "num_classes", c.num_classes);
  read(j, "dropout_rate", c.dropout_rate);
  read(j, "input_size", c.input_size);
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"random_crop", c.random_crop},
           {"augment", c.augment},
           {"seed", c.seed},
           {"convergence_tolerance", c.convergence_tolerance},
           {"convergence_window", c.convergence_window}};
}

void from_json(const Json& j, TrainConfig& c) {
  check_keys(j,
             {"batch_size", "learning_rate", "random_crop", "augment", "seed",
              "convergence_tolerance", "convergence_window"},
             "train");
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "random_crop", c.random_crop);
  read(j, "augment", c.augment);
  read(j, "seed", c.seed);
  read(j, "convergence_tolerance", c.convergence_tolerance);
  read(j, "convergence_window", c.convergence_window);
}

void to_json(Json& j, const UncertaintyConfig& c) {
  j = Json{{"k_passes", c.k_passes}, {"epsilon", c.epsilon}, {"clamp_negative", c.clamp_negative}};
}

void from_json(const Json& j, UncertaintyConfig& c) {
  check_keys(j, {"k_passes", "epsilon", "clamp_negative"}, "uncertainty");
  read(j, "k_passes", c.k_passes);
  read(j, "epsilon", c.epsilon);
  read(j, "clamp_negative", c.clamp_negative);
}

void to_json(Json& j, const KernelConfig& c) {
  j = Json{{"kind", "rbf"}};
  if (c.bandwidth) {
    j["bandwidth"] = *c.bandwidth;
  } else {
    j["bandwidth"] = "median-heuristic";
  }
}

void from_json(const Json& j, KernelConfig& c) {
  check_keys(j, {"kind", "bandwidth"}, "kernel");
  if (j.contains("kind") && j.at("kind") != "rbf") {
    throw Error(ErrorCode::kInvalidConfig, "only the rbf kernel is supported");
  }
  if (j.contains("bandwidth")) {
    const Json& b = j.at("bandwidth");
    if (b.is_number()) {
      c.bandwidth = b.get<double>();
    } else if (b.is_null() || b == "median-heuristic") {
      c.bandwidth.reset();
    } else {
      throw Error(ErrorCode::kInvalidConfig, "bandwidth must be a number or \"median-heuristic\"");
    }
  }
}

void to_json(Json& j, const WatershedConfig& c) {
  j = Json{{"threshold", c.threshold},
           {"min_seed_area", c.min_seed_area},
           {"connectivity", 4},
           {"single_instance_on_no_seeds", c.single_instance_on_no_seeds}};
}

void from_json(const Json& j, WatershedConfig& c) {
  check_keys(j, {"threshold", "min_seed_area", "connectivity", "single_instance_on_no_seeds"},
             "watershed");
  read(j, "threshold", c.threshold);
  read(j, "min_seed_area", c.min_seed_area);
  read(j, "single_instance_on_no_seeds", c.single_instance_on_no_seeds);
  if (j.contains("connectivity") && j.at("connectivity") != 4) {
    throw Error(ErrorCode::kInvalidConfig, "only 4-connectivity is supported");
  }
}

void to_json(Json& j, const DomainSpec& c) {
  j = Json{{"name", c.name},
           {"width", c.width},
           {"height", c.height},
           {"cell_diameter", c.cell_diameter},
           {"diameter_jitter", c.diameter_jitter},
           {"membrane_thickness", c.membrane_thickness},
           {"noise_sigma", c.noise_sigma},
           {"gamma", c.gamma},
           {"cell_intensity_lo", c.cell_intensity_lo},
           {"cell_intensity_hi", c.cell_intensity_hi},
           {"membrane_intensity", c.membrane_intensity},
           {"white_stripe_prob", c.white_stripe_prob},
           {"black_tile_prob", c.black_tile_prob},
           {"contrast_prob", c.contrast_prob},
           {"seed", c.seed}};
}

void from_json(const Json& j, DomainSpec& c) {
  check_keys(j,
             {"name", "width", "height", "cell_diameter", "diameter_jitter", "membrane_thickness",
              "noise_sigma", "gamma", "cell_intensity_lo", "cell_intensity_hi",
              "membrane_intensity", "white_stripe_prob", "black_tile_prob", "contrast_prob",
              "seed"},
             "domain spec");
  read(j, "name", c.name);
  read(j, "width", c.width);
  read(j, "height", c.height);
  read(j, "cell_diameter", c.cell_diameter);
  read(j, "diameter_jitter", c.diameter_jitter);
  read(j, "membrane_thickness", c.membrane_thickness);
  read(j, "noise_sigma", c.noise_sigma);
  read(j, "gamma", c.gamma);
  read(j, "cell_intensity_lo", c.cell_intensity_lo);
  read(j, "cell_intensity_hi", c.cell_intensity_hi);
  read(j, "membrane_intensity", c.membrane_intensity);
  read(j, "white_stripe_prob", c.white_stripe_prob);
  read(j, "black_tile_prob", c.black_tile_prob);
  read(j, "contrast_prob", c.contrast_prob);
  read(j, "seed", c.seed);
}

void to_json(Json& j, const AdaptConfig& c) {
  j = Json{{"mode", to_string(c.mode)},
           {"sampler", to_string(c.sampler)},
           {"annotations", c.annotations},
           {"train_steps", c.train_steps},
           {"iterations", c.iterations},
           {"model", c.model},
           {"train", c.train},
           {"uncertainty", c.uncertainty},
           {"kmeans_iterations", c.sampler_options.kmeans_iterations},
           {"kernel", c.kernel},
           {"estimator", to_string(c.estimator)},
           {"mmd_sample_cap", c.mmd_sample_cap},
           {"ods_seed", c.ods_seed}};
}

void from_json(const Json& j, AdaptConfig& c) {
  check_keys(j,
             {"mode", "sampler", "annotations", "train_steps", "iterations", "model", "train",
              "uncertainty", "kmeans_iterations", "kernel", "estimator", "mmd_sample_cap",
              "ods_seed"},
             "adapt");
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("sampler")) c.sampler = parse_sampler(j.at("sampler").get<std::string>());
  read(j, "annotations", c.annotations);
  read(j, "train_steps", c.train_steps);
  read(j, "iterations", c.iterations);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  if (j.contains("train")) from_json(j.at("train"), c.train);
  if (j.contains("uncertainty")) from_json(j.at("uncertainty"), c.uncertainty);
  read(j, "kmeans_iterations", c.sampler_options.kmeans_iterations);
  if (j.contains("kernel")) from_json(j.at("kernel"), c.kernel);
  if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator").get<std::string>());
  read(j, "mmd_sample_cap", c.mmd_sample_cap);
  read(j, "ods_seed", c.ods_seed);
}

void to_json(Json& j, const GridConfig& c) {
  Json modes = Json::array();
  for (auto m : c.modes) modes.push_back(to_string(m));
  Json samplers = Json::array();
  for (auto s : c.samplers) samplers.push_back(to_string(s));
  j = Json{{"targets", c.targets},
           {"modes", modes},
           {"samplers", samplers},
           {"sample_sizes", c.sample_sizes},
           {"seeds", c.seeds},
           {"base", c.base},
           {"watershed", c.watershed},
           {"ignore_gt_zero", c.ignore_gt_zero}};
}

void from_json(const Json& j, GridConfig& c) {
  check_keys(j,
             {"targets", "modes", "samplers", "sample_sizes", "seeds", "base", "watershed",
              "ignore_gt_zero"},
             "grid");
  read(j, "targets", c.targets);
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) c.modes.push_back(parse_mode(m.get<std::string>()));
  }
  if (j.contains("samplers")) {
    c.samplers.clear();
    for (const auto& s : j.at("samplers")) c.samplers.push_back(parse_sampler(s.get<std::string>()));
  }
  read(j, "sample_sizes", c.sample_sizes);
  read(j, "seeds", c.seeds);
  if (j.contains("base")) from_json(j.at("base"), c.base);
  if (j.contains("watershed")) from_json(j.at("watershed"), c.watershed);
  read(j, "ignore_gt_zero", c.ignore_gt_zero);
}

void to_json(Json& j, const BudgetPlan& p) {
  j = Json{{"A", p.annotations}, {"B", p.train_steps},     {"T_requested", p.t_requested},
           {"T_effective", p.t_effective}, {"K", p.k}, {"S", p.s}};
}

void to_json(Json& j, const VIResult& v) {
  j = Json{{"vi_split", v.vi_split},
           {"vi_merge", v.vi_merge},
           {"vi_total", v.vi_total},
           {"pixel_count", v.pixel_count}};
}

void to_json(Json& j, const RunRecord& r) {
  Json iters = Json::array();
  for (const auto& it : r.iterations) {
    iters.push_back(Json{{"iteration", it.iteration},
                         {"k", it.k},
                         {"steps", it.steps},
                         {"picked", it.picked},
                         {"picked_ids", it.picked_ids},
                         {"warnings", it.warnings},
                         {"final_loss", it.final_loss},
                         {"labeled_after", it.labeled_after}});
  }
  j = Json{{"target", r.target},
           {"mode", to_string(r.mode)},
           {"sampler", to_string(r.sampler)},
           {"plan", r.plan},
           {"seed", r.seed},
           {"source", r.source},
           {"candidates", r.candidate_names},
           {"candidate_distances", r.candidate_distances},
           {"initial_hash", r.initial_hash},
           {"final_hash", r.final_hash},
           {"annotations_used", r.annotations_used},
           {"steps_used", r.steps_used},
           {"iterations", iters}};
  if (r.test) {
    Json per = Json::array();
    for (const auto& ie : r.test->per_image) {
      per.push_back(Json{{"image_id", ie.image_id}, {"vi", ie.vi}, {"no_seeds", ie.no_seeds}});
    }
    j["test"] = Json{{"mean", r.test->mean}, {"per_image", per}};
  }
}

void to_json(Json& j, const Dendrogram& d) {
  Json merges = Json::array();
  for (const auto& m : d.merges) {
    merges.push_back(Json{{"a", m.a}, {"b", m.b}, {"height", m.height}, {"size", m.size}});
  }
  j = Json{{"leaves", d.leaves}, {"linkage", d.linkage}, {"merges", merges}};
}

Json parse_json(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("invalid JSON: ") + e.what());
  }
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

namespace {

std::string method_name(const RunRecord& r) {
  return to_string(r.mode) + ":" + to_string(r.sampler);
}

}  // namespace

Json run_manifest(const Json& config, std::span<const RunRecord> records) {
  using Key = std::tuple<std::string, std::string, int>;
  std::vector<Key> order;
  std::map<Key, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    if (!r.test) continue;
    Key k{r.target, method_name(r), r.plan.annotations};
    auto [it, fresh] = groups.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(&r);
  }
  if (order.empty()) throw Error(ErrorCode::kEmptyRun, "no evaluated runs");
  Json out;
  out["config_hash"] = git_blob_hash(dump_json(config));
  out["config"] = config;
  out["std"] = "sample (n-1)";
  Json arr = Json::array();
  for (const auto& k : order) {
    const auto& rs = groups.at(k);
    std::vector<double> totals;
    Json seeds = Json::array();
    Json per_seed = Json::array();
    for (const RunRecord* r : rs) {
      totals.push_back(r->test->mean.vi_total);
      seeds.push_back(r->seed);
      per_seed.push_back(r->test->mean);
    }
    const MeanSd agg = mean_sd(totals);
    arr.push_back(Json{{"target", std::get<0>(k)},
                       {"method", std::get<1>(k)},
                       {"transfer_domain", transfer_domain(rs.front()->mode)},
                       {"sample_size", std::get<2>(k)},
                       {"seeds", seeds},
                       {"vi", per_seed},
                       {"mean", agg.mean},
                       {"std", agg.sd}});
  }
  out["groups"] = arr;
  return out;
}

std::string run_manifest_csv(std::span<const RunRecord> records) {
  std::string out = "target,method,transfer_domain,sample_size,seed,vi_split,vi_merge,vi_total\n";
  for (const auto& r : records) {
    if (!r.test) continue;
    const VIResult& v = r.test->mean;
    const std::vector<std::string> fields{r.target,
                                          method_name(r),
                                          transfer_domain(r.mode),
                                          std::to_string(r.plan.annotations),
                                          std::to_string(r.seed),
                                          format_real(v.vi_split),
                                          format_real(v.vi_merge),
                                          format_real(v.vi_total)};
    out += join(fields, ",") + "\n";
  }
  return out;
}

void write_run_manifest(const Json& config, std::span<const RunRecord> records,
                        const std::filesystem::path& path) {
  const Json j = run_manifest(config, records);
  write_text(path, dump_json(j));
  std::filesystem::path csv = path;
  csv.replace_extension(".csv");
  write_text(csv, run_manifest_csv(records));
}

}  // namespace emadapt
