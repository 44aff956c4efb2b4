#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "emadapt/adapt.hpp"
#include "emadapt/config.hpp"
#include "emadapt/error.hpp"
#include "emadapt/mmd.hpp"
#include "emadapt/segeval.hpp"
#include "emadapt/stats.hpp"
#include "emadapt/synthdomains.hpp"
#include "emadapt/version.hpp"

namespace py = pybind11;
using namespace emadapt;

namespace {

using LabelArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

LabelMap to_labels(const LabelArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::kShapeError, "label array must be 2-D");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  return LabelMap(w, h, std::vector<std::uint32_t>(a.data(), a.data() + a.size()));
}

LabelArray from_labels(const LabelMap& m) {
  LabelArray out({m.height(), m.width()});
  std::copy(m.labels().begin(), m.labels().end(), out.mutable_data());
  return out;
}

std::vector<EmbeddingVec> to_rows(const RealArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::kShapeError, "embedding array must be 2-D");
  std::vector<EmbeddingVec> rows;
  const auto d = static_cast<std::size_t>(a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    const double* p = a.data() + static_cast<std::size_t>(i) * d;
    rows.emplace_back(std::vector<double>(p, p + d));
  }
  return rows;
}

py::dict vi_dict(const VIResult& v) {
  py::dict d;
  d["vi_split"] = v.vi_split;
  d["vi_merge"] = v.vi_merge;
  d["vi_total"] = v.vi_total;
  d["pixel_count"] = v.pixel_count;
  return d;
}

Clustering clustering(const std::vector<std::string>& items, const std::vector<int>& labels) {
  return make_clustering(items, labels);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of emadapt";
  m.attr("__version__") = kVersion;

  static PyObject* error_type = nullptr;
  error_type = py::exception<Error>(m, "EmadaptError").release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def(
      "variation_of_information",
      [](const LabelArray& pred, const LabelArray& gt, bool ignore_gt_zero) {
        return vi_dict(variation_of_information(to_labels(pred), to_labels(gt), ignore_gt_zero));
      },
      py::arg("pred"), py::arg("gt"), py::arg("ignore_gt_zero") = true);

  m.def(
      "seeded_watershed",
      [](const RealArray& membrane, double threshold, int min_seed_area) {
        if (membrane.ndim() != 2) throw Error(ErrorCode::kShapeError, "membrane map must be 2-D");
        WatershedConfig c;
        c.threshold = threshold;
        c.min_seed_area = min_seed_area;
        c.validate();
        const std::span<const double> v(membrane.data(), static_cast<std::size_t>(membrane.size()));
        return from_labels(seeded_watershed(v, static_cast<int>(membrane.shape(1)),
                                            static_cast<int>(membrane.shape(0)), c));
      },
      py::arg("membrane"), py::arg("threshold") = 0.5, py::arg("min_seed_area") = 8);

  m.def(
      "mmd2",
      [](const RealArray& x, const RealArray& y, std::optional<double> bandwidth,
         const std::string& estimator) {
        KernelConfig k;
        k.bandwidth = bandwidth;
        k.validate();
        const auto r = mmd2(to_rows(x), to_rows(y), k, parse_estimator(estimator));
        py::dict d;
        d["value"] = r.value;
        d["sigma"] = r.sigma;
        d["estimator"] = to_string(r.estimator);
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("bandwidth") = py::none(),
      py::arg("estimator") = "biased");

  m.def("fowlkes_mallows",
        [](const std::vector<std::string>& items, const std::vector<int>& a,
           const std::vector<int>& b) {
          return fowlkes_mallows(clustering(items, a), clustering(items, b));
        },
        py::arg("items"), py::arg("reference"), py::arg("observed"));

  m.def(
      "permutation_test_fm",
      [](const std::vector<std::string>& items, const std::vector<int>& reference,
         const std::vector<int>& observed, const std::string& mode, std::uint64_t n_permutations,
         std::uint64_t seed) {
        PermutationOptions o;
        if (mode == "exact") {
          o.mode = PermutationMode::kExact;
        } else if (mode == "monte-carlo") {
          o.mode = PermutationMode::kMonteCarlo;
        } else {
          throw Error(ErrorCode::kInvalidConfig, "mode must be exact or monte-carlo");
        }
        o.n_permutations = n_permutations;
        o.seed = seed;
        const auto r =
            permutation_test_fm(clustering(items, reference), clustering(items, observed), o);
        py::dict d;
        d["p_value"] = r.p_value;
        d["fowlkes_mallows"] = r.observed_fm;
        d["at_least"] = r.at_least;
        d["total"] = r.total;
        return d;
      },
      py::arg("items"), py::arg("reference"), py::arg("observed"), py::arg("mode") = "exact",
      py::arg("n_permutations") = 20000, py::arg("seed") = 0);

  m.def(
      "mann_whitney_u",
      [](const std::vector<double>& a, const std::vector<double>& b,
         const std::string& alternative) {
        Alternative alt;
        if (alternative == "two-sided") {
          alt = Alternative::kTwoSided;
        } else if (alternative == "greater") {
          alt = Alternative::kGreater;
        } else {
          throw Error(ErrorCode::kInvalidConfig, "alternative must be two-sided or greater");
        }
        const auto r = mann_whitney_u(a, b, alt);
        py::dict d;
        d["u_a"] = r.u_a;
        d["u_b"] = r.u_b;
        d["p_value"] = r.p_value;
        d["exact"] = r.exact;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("alternative") = "two-sided");

  m.def(
      "cluster",
      [](const std::vector<std::string>& names, const RealArray& dist, int k) {
        if (dist.ndim() != 2) throw Error(ErrorCode::kShapeError, "distance matrix must be 2-D");
        DistanceMatrix dm;
        dm.names = names;
        const auto n = static_cast<std::size_t>(dist.shape(0));
        if (dist.shape(1) != dist.shape(0) || n != names.size()) {
          throw Error(ErrorCode::kNonSquare, "matrix must be n x n with n names");
        }
        for (std::size_t i = 0; i < n; ++i) {
          dm.entries.emplace_back(dist.data() + i * n, dist.data() + (i + 1) * n);
        }
        const Dendrogram d = agglomerative_cluster(symmetrize(dm));
        const Clustering c = cut_at_k(d, k);
        py::dict out;
        out["dendrogram"] = dendrogram_to_text(d);
        out["items"] = c.items;
        out["assignment"] = c.assignment;
        return out;
      },
      py::arg("names"), py::arg("distances"), py::arg("k"));

  m.def("plan_budget", [](int a, int b, int t) {
    const BudgetPlan p = plan_budget(a, b, t);
    py::dict d;
    d["t_effective"] = p.t_effective;
    d["k"] = p.k;
    d["s"] = p.s;
    return d;
  }, py::arg("annotations"), py::arg("train_steps"), py::arg("iterations"));

  m.def(
      "generate_sample",
      [](const std::string& spec_json, std::size_t index) {
        DomainSpec spec;
        from_json(parse_json(spec_json), spec);
        spec.validate();
        const Sample s = generate_sample(spec, index);
        py::array_t<std::uint8_t> image({s.image.height(), s.image.width()});
        std::copy(s.image.pixels().begin(), s.image.pixels().end(), image.mutable_data());
        py::dict flags;
        flags["white_stripe"] = s.artifacts.white_stripe;
        flags["black_tile"] = s.artifacts.black_tile;
        flags["contrast"] = s.artifacts.contrast;
        return py::make_tuple(s.id, image, from_labels(*s.labels), flags);
      },
      py::arg("spec_json"), py::arg("index"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::dispatch(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
