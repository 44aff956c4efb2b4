#include "emadapt/segeval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <tuple>

#include "emadapt/error.hpp"
#include "emadapt/sampling.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

void WatershedConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "watershed threshold must lie in (0, 1)");
  }
  if (min_seed_area < 1) throw Error(ErrorCode::kInvalidConfig, "min_seed_area must be >= 1");
}

namespace {

void check_map(std::span<const double> membrane, int width, int height) {
  if (width < 1 || height < 1 ||
      membrane.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorCode::kShapeError, "membrane map size does not match its dimensions");
  }
}

template <class F>
void for_neighbors(std::size_t p, int width, int height, F&& f) {
  const int x = static_cast<int>(p % static_cast<std::size_t>(width));
  const int y = static_cast<int>(p / static_cast<std::size_t>(width));
  if (y > 0) f(p - static_cast<std::size_t>(width));
  if (x > 0) f(p - 1);
  if (x + 1 < width) f(p + 1);
  if (y + 1 < height) f(p + static_cast<std::size_t>(width));
}

}  // namespace

LabelMap watershed_seeds(std::span<const double> membrane, int width, int height,
                         const WatershedConfig& config) {
  config.validate();
  check_map(membrane, width, height);
  const std::size_t n = membrane.size();
  std::vector<std::uint32_t> comp(n, 0);
  std::vector<std::uint32_t> out(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> members;
  std::uint32_t next = 0;
  std::uint32_t seeds = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] != 0 || !(membrane[start] < config.threshold)) continue;
    ++next;
    members.clear();
    stack.push_back(start);
    comp[start] = next;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      members.push_back(p);
      for_neighbors(p, width, height, [&](std::size_t q) {
        if (comp[q] == 0 && membrane[q] < config.threshold) {
          comp[q] = next;
          stack.push_back(q);
        }
      });
    }
    if (members.size() >= static_cast<std::size_t>(config.min_seed_area)) {
      ++seeds;
      for (std::size_t p : members) out[p] = seeds;
    }
  }
  if (seeds == 0) throw Error(ErrorCode::kNoSeeds, "no seed component reaches the minimum area");
  return LabelMap(width, height, std::move(out));
}

LabelMap flood_from_seeds(std::span<const double> membrane, int width, int height,
                          const LabelMap& seeds) {
  check_map(membrane, width, height);
  if (seeds.width() != width || seeds.height() != height) {
    throw Error(ErrorCode::kShapeError, "seed map shape differs from membrane map");
  }
  std::vector<std::uint32_t> label(seeds.labels().begin(), seeds.labels().end());
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  bool any = false;
  for (std::size_t p = 0; p < label.size(); ++p) {
    if (label[p] != 0) {
      queue.emplace(membrane[p], p);
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::kNoSeeds, "seed map has no labeled pixel");
  while (!queue.empty()) {
    const std::size_t p = queue.top().second;
    queue.pop();
    for_neighbors(p, width, height, [&](std::size_t q) {
      if (label[q] == 0) {
        label[q] = label[p];
        queue.emplace(membrane[q], q);
      }
    });
  }
  return LabelMap(width, height, std::move(label));
}

LabelMap seeded_watershed(std::span<const double> membrane, int width, int height,
                          const WatershedConfig& config) {
  return flood_from_seeds(membrane, width, height,
                          watershed_seeds(membrane, width, height, config));
}

LabelMap seeded_watershed(const ProbMap& probs, const WatershedConfig& config) {
  if (probs.channels() < 1) throw Error(ErrorCode::kShapeError, "probability map has no channels");
  return seeded_watershed(probs.channel(0), probs.width(), probs.height(), config);
}

ProbMap membrane_probs_from_labels(const LabelMap& labels) {
  ProbMap m(labels.width(), labels.height(), 2);
  const auto l = labels.labels();
  for (std::size_t p = 0; p < l.size(); ++p) {
    const double v = l[p] == kMembraneLabel ? 1.0 : 0.0;
    m.value(0, p) = v;
    m.value(1, p) = 1.0 - v;
  }
  return m;
}

VIResult variation_of_information(const LabelMap& pred, const LabelMap& gt, bool ignore_gt_zero) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw Error(ErrorCode::kShapeError, "prediction and ground truth shapes differ");
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> joint;
  std::map<std::uint32_t, std::uint64_t> pred_count;
  std::map<std::uint32_t, std::uint64_t> gt_count;
  std::uint64_t total = 0;
  const auto pl = pred.labels();
  const auto gl = gt.labels();
  for (std::size_t i = 0; i < pl.size(); ++i) {
    if (ignore_gt_zero && gl[i] == kMembraneLabel) continue;
    ++joint[{gl[i], pl[i]}];
    ++pred_count[pl[i]];
    ++gt_count[gl[i]];
    ++total;
  }
  if (total == 0) throw Error(ErrorCode::kZeroPixels, "no pixels counted for VI");
  const double n = static_cast<double>(total);
  double split = 0.0;  // H(gt | pred)
  double merge = 0.0;  // H(pred | gt)
  for (const auto& [key, count] : joint) {
    const double c = static_cast<double>(count);
    split -= c * std::log(c / static_cast<double>(pred_count[key.second]));
    merge -= c * std::log(c / static_cast<double>(gt_count[key.first]));
  }
  VIResult r;
  r.vi_split = split / n;
  r.vi_merge = merge / n;
  r.vi_total = r.vi_split + r.vi_merge;
  r.pixel_count = total;
  return r;
}

Evaluation evaluate_predictions(std::span<const ProbMap> predictions, const DomainPool& test,
                                const WatershedConfig& config, bool ignore_gt_zero) {
  config.validate();
  if (predictions.size() != test.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one prediction per test image required");
  }
  if (test.size() == 0) throw Error(ErrorCode::kEmptySet, "test pool is empty");
  Evaluation ev;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Sample& s = test.sample(i);
    if (!s.labels) throw Error(ErrorCode::kNoLabels, "test image '" + s.id + "' has no labels");
    ImageEvaluation ie;
    ie.image_id = s.id;
    LabelMap seg;
    try {
      seg = seeded_watershed(predictions[i], config);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoSeeds || !config.single_instance_on_no_seeds) throw;
      seg = LabelMap(s.labels->width(), s.labels->height(), 1u);
      ie.no_seeds = true;
    }
    ie.vi = variation_of_information(seg, *s.labels, ignore_gt_zero);
    ev.per_image.push_back(ie);
  }
  const double k = static_cast<double>(ev.per_image.size());
  for (const auto& ie : ev.per_image) {
    ev.mean.vi_split += ie.vi.vi_split;
    ev.mean.vi_merge += ie.vi.vi_merge;
    ev.mean.pixel_count += ie.vi.pixel_count;
  }
  ev.mean.vi_split /= k;
  ev.mean.vi_merge /= k;
  ev.mean.vi_total = ev.mean.vi_split + ev.mean.vi_merge;
  return ev;
}

Evaluation evaluate_model(const ModelParams& model, const DomainPool& test,
                          const WatershedConfig& config, bool ignore_gt_zero) {
  std::vector<ProbMap> preds;
  preds.reserve(test.size());
  for (const Sample& s : test.samples()) preds.push_back(predict(model, s.image));
  return evaluate_predictions(preds, test, config, ignore_gt_zero);
}

std::string evaluation_to_csv(const Evaluation& evaluation) {
  std::string out = "image_id,vi_split,vi_merge,vi_total,pixel_count,no_seeds\n";
  for (const auto& ie : evaluation.per_image) {
    out += ie.image_id + "," + format_real(ie.vi.vi_split) + "," + format_real(ie.vi.vi_merge) +
           "," + format_real(ie.vi.vi_total) + "," + std::to_string(ie.vi.pixel_count) + "," +
           (ie.no_seeds ? "1" : "0") + "\n";
  }
  return out;
}

EfficacyReport sampler_efficacy(std::span<const SamplerResult> results,
                                std::span<const std::string> samplers) {
  if (samplers.empty()) throw Error(ErrorCode::kEmptySet, "no samplers given");
  std::map<std::pair<std::string, int>, std::map<std::string, double>> settings;
  for (const auto& r : results) settings[{r.target, r.sample_size}][r.sampler] = r.mean_vi;

  EfficacyReport report;
  std::vector<double> wins(samplers.size(), 0.0);
  for (const auto& [key, cell] : settings) {
    bool complete = true;
    for (const auto& s : samplers) complete = complete && cell.count(s) > 0;
    if (!complete) {
      report.warnings.push_back("incomplete setting skipped: " + key.first + " n=" +
                                std::to_string(key.second));
      continue;
    }
    double best = cell.at(samplers[0]);
    for (const auto& s : samplers) best = std::min(best, cell.at(s));
    std::vector<std::size_t> winners;
    for (std::size_t i = 0; i < samplers.size(); ++i) {
      if (cell.at(samplers[i]) == best) winners.push_back(i);
    }
    for (std::size_t i : winners) wins[i] += 1.0 / static_cast<double>(winners.size());
    ++report.settings_used;
  }
  if (report.settings_used == 0) {
    throw Error(ErrorCode::kEmptySet, "no setting contains every sampler");
  }
  for (std::size_t i = 0; i < samplers.size(); ++i) {
    EfficacyEntry e;
    e.sampler = samplers[i];
    try {
      e.strategy_class = strategy_class(parse_sampler(samplers[i]));
    } catch (const Error&) {
      e.strategy_class = "";
    }
    e.percent = 100.0 * wins[i] / static_cast<double>(report.settings_used);
    report.entries.push_back(e);
  }
  return report;
}

std::string efficacy_to_csv(const EfficacyReport& report) {
  std::string out = "sampler,strategy,efficacy_percent\n";
  for (const auto& e : report.entries) {
    out += e.sampler + "," + e.strategy_class + "," + format_fixed(e.percent, 2) + "\n";
  }
  return out;
}

}  // namespace emadapt
