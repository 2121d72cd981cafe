#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "shiftlab/bounds.hpp"
#include "shiftlab/cli.hpp"
#include "shiftlab/error.hpp"
#include "shiftlab/estimators.hpp"
#include "shiftlab/exact.hpp"
#include "shiftlab/harness.hpp"

namespace py = pybind11;
using namespace shiftlab;

namespace {

py::object to_python(const nlohmann::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

LabelDistribution dist(const std::vector<double>& p) { return LabelDistribution(p); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Covariate and concept shift metrics, bounds and DG evaluation";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ComputationError>(m, "ComputationError", PyExc_RuntimeError);

  py::class_<LossFunction>(m, "LossFunction")
      .def_static("zero_one", &LossFunction::zero_one, py::arg("bound") = 1.0)
      .def_static("total_variation", &LossFunction::total_variation, py::arg("bound") = 1.0)
      .def_static("parse", &LossFunction::parse, py::arg("name"), py::arg("bound") = 1.0)
      .def_property_readonly("bound", &LossFunction::bound)
      .def_property_readonly("name", &LossFunction::name)
      .def_property_readonly("is_symmetric", &LossFunction::is_symmetric)
      .def_property_readonly("obeys_triangle", &LossFunction::obeys_triangle)
      .def("__call__", [](const LossFunction& loss, const std::vector<double>& p, const std::vector<double>& q) {
        return loss(dist(p), dist(q));
      });

  py::class_<DiscreteDomainPair>(m, "DiscreteDomainPair")
      .def_property_readonly("size", &DiscreteDomainPair::size)
      .def_property_readonly("label_count", &DiscreteDomainPair::label_count)
      .def_property_readonly("points", &DiscreteDomainPair::points)
      .def_property_readonly("p_tr", [](const DiscreteDomainPair& p) {
        return std::vector<double>(p.p_tr().begin(), p.p_tr().end());
      })
      .def_property_readonly("p_te", [](const DiscreteDomainPair& p) {
        return std::vector<double>(p.p_te().begin(), p.p_te().end());
      })
      .def("to_json", [](const DiscreteDomainPair& p) { return to_python(to_json(p)); });

  m.def("pair_from_json", [](const std::string& text) { return pair_from_json(nlohmann::json::parse(text)); });
  m.def("load_pair", [](const std::string& path) { return load_pair(path); });

  py::class_<EnumerableClass>(m, "EnumerableClass")
      .def("__len__", &EnumerableClass::size)
      .def_readonly("description", &EnumerableClass::description)
      .def("labels", [](const EnumerableClass& h) {
        std::vector<std::vector<std::size_t>> out;
        for (const auto& member : h.members) {
          std::vector<std::size_t> row;
          for (const auto& d : member) row.push_back(d.argmax());
          out.push_back(std::move(row));
        }
        return out;
      });
  m.def("enumerate_all_labelings", &enumerate_all_labelings, py::arg("support_size"), py::arg("label_count"),
        py::arg("cap") = kDefaultLabelingCap);

  m.def("l1_distance", py::overload_cast<const DiscreteDomainPair&>(&l1_distance));
  m.def("prop1_discrepancy", &prop1_discrepancy, py::arg("pair"), py::arg("bound") = 1.0);
  m.def("exact_discrepancy", [](const DiscreteDomainPair& pair, const EnumerableClass& h, const LossFunction& loss) {
    return exact_discrepancy(pair, h, loss);
  });
  m.def("exact_concept_shift", [](const DiscreteDomainPair& pair, const LossFunction& loss) {
    const auto c = exact_concept_shift(pair, loss);
    return py::make_tuple(c.min(), c.max());
  });
  m.def("exact_shift_report", [](const DiscreteDomainPair& pair, const EnumerableClass& h, const LossFunction& loss) {
    return to_python(to_json(exact_shift_report(pair, h, loss)));
  });
  m.def("kl_decomposition", [](const Eigen::MatrixXd& tr, const Eigen::MatrixXd& te) {
    const auto d = kl_decomposition(tr, te);
    py::dict out;
    out["concept_kl"] = d.concept_kl;
    out["covariate_kl"] = d.covariate_kl;
    out["total_kl"] = d.total_kl;
    return out;
  });

  m.def("empirical_rademacher",
        [](const std::vector<std::vector<double>>& values, std::size_t draws, std::uint64_t seed) {
          return to_python(to_json(empirical_rademacher(FunctionTable{values}, draws, seed)));
        },
        py::arg("values"), py::arg("draws") = 200, py::arg("seed") = 0);

  m.def("population_upper_bound", [](double eps_tr, double m_cov, double m_cpt_min) {
    return to_python(to_json(population_upper_bound(eps_tr, m_cov, m_cpt_min)));
  });
  m.def("population_lower_bound", [](double eps_tr, double m_cov, double m_cpt_max) {
    return to_python(to_json(population_lower_bound(eps_tr, m_cov, m_cpt_max)));
  });
  m.def("empirical_residual", &empirical_residual, py::arg("n_tr"), py::arg("n_te"), py::arg("bound"),
        py::arg("delta"));
  m.def("verify_bounds", [](const DiscreteDomainPair& pair, const EnumerableClass& h, const LossFunction& loss) {
    return to_python(to_json(verify_bounds_bruteforce(pair, h, loss)));
  });

  m.def("dg_metrics",
        [](const std::vector<double>& acc, std::optional<std::vector<std::size_t>> sizes, const std::string& unit) {
          AccuracyTable table;
          table.acc = acc;
          table.sizes = sizes.value_or(std::vector<std::size_t>(acc.size(), 1));
          for (std::size_t k = 0; k < acc.size(); ++k) table.domains.push_back("d" + std::to_string(k));
          if (unit == "percent") {
            table.unit = AccuracyUnit::Percent;
          } else if (unit == "fraction") {
            table.unit = AccuracyUnit::Fraction;
          } else {
            throw ValidationError("unit must be 'percent' or 'fraction'");
          }
          return to_python(to_json(dg_metrics(table)));
        },
        py::arg("acc"), py::arg("sizes") = py::none(), py::arg("unit") = "percent");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
