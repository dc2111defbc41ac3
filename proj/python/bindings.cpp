#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "eql/error.hpp"
#include "eql/settings.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::size_t, py::array::c_style | py::array::forcecast>;

eql::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw eql::DimensionError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return eql::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const eql::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

eql::LabelBatch to_labels(const IndexArray& a) {
  if (a.ndim() != 1) throw eql::DimensionError("labels must be 1-D");
  return eql::LabelBatch(a.data(), a.data() + a.size());
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

py::dict accuracy_dict(const eql::AccuracyReport& r) {
  py::list groups;
  for (const auto& g : r.groups) {
    py::dict d;
    d["categories"] = py::make_tuple(g.begin, g.end - 1);
    d["count"] = g.count;
    d["accuracy"] = g.accuracy ? py::cast(*g.accuracy) : py::none();
    groups.append(d);
  }
  py::dict out;
  out["overall"] = r.overall;
  out["groups"] = groups;
  return out;
}

eql::Settings to_settings(const py::dict& values) {
  eql::Settings s;
  for (const auto& [k, v] : values) {
    const auto key = py::str(k).cast<std::string>();
    std::string text;
    if (py::isinstance<py::bool_>(v)) {
      text = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::float_>(v)) {
      text = eql::format_real(v.cast<double>());
    } else {
      text = py::str(v).cast<std::string>();
    }
    s.set(key, text);
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_eql, m) {
  m.doc() = "Gradient-driven equalization losses and the long-tailed training harness";

  auto base = py::register_exception<eql::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<eql::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<eql::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<eql::ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<eql::IngestionError>(m, "IngestionError", base.ptr());

  py::enum_<eql::LossVariant>(m, "LossVariant")
      .value("bce", eql::LossVariant::bce)
      .value("ce", eql::LossVariant::ce)
      .value("focal", eql::LossVariant::focal)
      .value("qfl", eql::LossVariant::qfl)
      .value("sigmoid_eql", eql::LossVariant::sigmoid_eql)
      .value("softmax_eql", eql::LossVariant::softmax_eql)
      .value("efl", eql::LossVariant::efl)
      .value("eqfl", eql::LossVariant::eqfl);
  py::enum_<eql::MappingKind>(m, "MappingKind")
      .value("linear", eql::MappingKind::linear)
      .value("sqrt", eql::MappingKind::sqrt)
      .value("exp", eql::MappingKind::exp)
      .value("sigmoid_like", eql::MappingKind::sigmoid_like);
  py::enum_<eql::Reduction>(m, "Reduction").value("mean", eql::Reduction::mean).value("sum", eql::Reduction::sum);

  py::class_<eql::MappingFn>(m, "MappingFn")
      .def(py::init([](eql::MappingKind kind, double gamma, double mu) { return eql::MappingFn{kind, gamma, mu}; }),
           py::arg("kind") = eql::MappingKind::sigmoid_like, py::arg("gamma") = 12.0, py::arg("mu") = 0.8)
      .def_readwrite("kind", &eql::MappingFn::kind)
      .def_readwrite("gamma", &eql::MappingFn::gamma)
      .def_readwrite("mu", &eql::MappingFn::mu);

  py::class_<eql::LossConfig>(m, "LossConfig")
      .def(py::init([](eql::LossVariant variant, double alpha, eql::MappingFn mapping, double pi, double alpha_t,
                       bool alpha_weighting, double gamma_b, double s, eql::Reduction reduction) {
             return eql::LossConfig{variant, alpha, mapping, pi, alpha_t, alpha_weighting, gamma_b, s, reduction};
           }),
           py::arg("variant") = eql::LossVariant::bce, py::arg("alpha") = 4.0, py::arg("mapping") = eql::MappingFn{},
           py::arg("pi") = 1.0, py::arg("alpha_t") = 0.25, py::arg("alpha_weighting") = true,
           py::arg("gamma_b") = 2.0, py::arg("s") = 8.0, py::arg("reduction") = eql::Reduction::mean)
      .def_readwrite("variant", &eql::LossConfig::variant)
      .def_readwrite("alpha", &eql::LossConfig::alpha)
      .def_readwrite("mapping", &eql::LossConfig::mapping)
      .def_readwrite("pi", &eql::LossConfig::pi)
      .def_readwrite("alpha_t", &eql::LossConfig::alpha_t)
      .def_readwrite("alpha_weighting", &eql::LossConfig::alpha_weighting)
      .def_readwrite("gamma_b", &eql::LossConfig::gamma_b)
      .def_readwrite("s", &eql::LossConfig::s)
      .def_readwrite("reduction", &eql::LossConfig::reduction)
      .def("validate", &eql::LossConfig::validate);

  py::class_<eql::GradStats>(m, "GradStats")
      .def(py::init<std::size_t, double, double>(), py::arg("num_categories"), py::arg("initial_ratio") = 1.0,
           py::arg("eps") = 1e-12)
      .def_static(
          "from_accumulators",
          [](const Array& g_pos, const Array& g_neg, std::size_t iteration) {
            return eql::GradStats::from_accumulators(to_vector(g_pos), to_vector(g_neg), iteration);
          },
          py::arg("g_pos"), py::arg("g_neg"), py::arg("iteration") = 0)
      .def(
          "accumulate",
          [](eql::GradStats& s, const Array& grad, const IndexArray& labels) -> eql::GradStats& {
            return s.accumulate(to_matrix(grad), to_labels(labels));
          },
          py::arg("grad"), py::arg("labels"), py::return_value_policy::reference_internal)
      .def("ratio", &eql::GradStats::ratio)
      .def("ratios", [](const eql::GradStats& s) { return py::array(py::cast(s.ratios())); })
      .def_property_readonly("g_pos", [](const eql::GradStats& s) {
        return py::array(py::cast(std::vector<double>(s.g_pos().begin(), s.g_pos().end())));
      })
      .def_property_readonly("g_neg", [](const eql::GradStats& s) {
        return py::array(py::cast(std::vector<double>(s.g_neg().begin(), s.g_neg().end())));
      })
      .def_property_readonly("iteration", &eql::GradStats::iteration)
      .def_property_readonly("num_categories", &eql::GradStats::num_categories);

  m.def("map_ratio", &eql::map_ratio, py::arg("fn"), py::arg("x"));
  m.def("sigmoid", &eql::sigmoid);

  m.def(
      "loss",
      [](const Array& logits, const IndexArray& labels, const eql::LossConfig& cfg,
         const eql::GradStats* stats, std::optional<Array> quality) {
        const eql::Matrix z = to_matrix(logits);
        const auto y = to_labels(labels);
        std::vector<double> q = quality ? to_vector(*quality) : std::vector<double>(y.size(), 1.0);
        const eql::GradStats fresh(z.cols());
        const auto out = eql::compute_loss(z, y, q, stats ? *stats : fresh, cfg);
        return py::make_tuple(out.value, to_array(out.grad));
      },
      py::arg("logits"), py::arg("labels"), py::arg("config"), py::arg("stats") = nullptr,
      py::arg("quality") = py::none(),
      "Loss value and its gradient w.r.t. the logits. Stats default to a fresh (balanced) "
      "snapshot; quality targets (qfl/eqfl) default to 1.");

  m.def(
      "compose_objectness",
      [](const Array& probs, const Array& objectness) {
        return to_array(eql::compose_objectness(to_matrix(probs), to_vector(objectness)));
      },
      py::arg("probs"), py::arg("objectness"));

  m.def(
      "synth_longtail",
      [](std::size_t classes, std::size_t dim, std::size_t base_count, double decay, double spread,
         std::uint64_t seed, std::uint64_t stream) {
        const auto d = eql::synth_longtail({classes, dim, base_count, decay, spread}, seed, stream);
        return py::make_tuple(to_array(d.features), py::array(py::cast(d.labels)));
      },
      py::arg("classes") = 20, py::arg("dim") = 16, py::arg("base_count") = 500, py::arg("decay") = 0.0,
      py::arg("spread") = 1.2, py::arg("seed") = 1, py::arg("stream") = 0);
  m.def("decay_for_imbalance", &eql::decay_for_imbalance, py::arg("imbalance"), py::arg("classes"));

  m.def(
      "grouped_accuracy",
      [](const Array& scores, const IndexArray& labels, std::vector<std::size_t> bounds) {
        return accuracy_dict(eql::grouped_accuracy(to_matrix(scores), to_labels(labels), bounds));
      },
      py::arg("scores"), py::arg("labels"), py::arg("bounds"));

  m.def(
      "grad_check",
      [](eql::LossVariant v, std::size_t trials, double tolerance, std::uint64_t seed) {
        eql::GradCheckOptions opt;
        opt.trials = trials;
        opt.tolerance = tolerance;
        opt.seed = seed;
        const auto r = eql::grad_check(v, opt);
        py::dict d;
        d["passed"] = r.passed;
        d["max_relative_error"] = r.max_relative_error;
        d["max_absolute_error"] = r.max_absolute_error;
        d["checked"] = r.checked;
        d["excluded"] = r.excluded;
        return d;
      },
      py::arg("variant"), py::arg("trials") = 100, py::arg("tolerance") = 1e-5,
      py::arg("seed") = eql::GradCheckOptions{}.seed);

  m.def(
      "run",
      [](const py::dict& settings) {
        eql::RunOutcome o;
        {
          const auto cfg = eql::resolve_experiment(to_settings(settings));
          py::gil_scoped_release release;
          o = eql::run_experiment(cfg);
        }
        py::list telemetry;
        for (const auto& t : o.result.telemetry) {
          telemetry.append(py::make_tuple(t.iteration, t.category, t.g_pos, t.g_neg, t.ratio, t.weight_pos,
                                          t.weight_neg, t.gamma_eff, t.loss_value));
        }
        py::dict out;
        out["summary"] = eql::run_summary(o);
        out["telemetry"] = telemetry;
        out["accuracy"] = accuracy_dict(o.report);
        return out;
      },
      py::arg("settings") = py::dict(),
      "Runs one experiment. Keys are the CLI flag names, e.g. {'loss': 'sigmoid-eql', 'iters': 500}.");

  m.def(
      "compare",
      [](const std::vector<std::string>& arms, const std::vector<std::uint64_t>& seeds, const py::dict& settings) {
        std::vector<eql::LossVariant> variants;
        for (const auto& a : arms) variants.push_back(eql::parse_loss_variant(a));
        const auto cfg = eql::resolve_experiment(to_settings(settings));
        eql::CompareReport r;
        {
          py::gil_scoped_release release;
          r = eql::run_compare(cfg, variants, seeds);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["arm"] = std::string(eql::to_string(row.arm));
          d["seed"] = row.seed;
          d["accuracy"] = accuracy_dict(row.report);
          d["tail_ratio"] = row.tail_ratio;
          d["final_loss"] = row.final_loss;
          d["max_loss_gap"] = row.max_loss_gap;
          rows.append(d);
        }
        return rows;
      },
      py::arg("arms"), py::arg("seeds") = std::vector<std::uint64_t>{1, 2, 3, 4, 5},
      py::arg("settings") = py::dict());
}
