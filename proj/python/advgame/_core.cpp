#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "advgame/attacks.hpp"
#include "advgame/checkpoint.hpp"
#include "advgame/config.hpp"
#include "advgame/data.hpp"
#include "advgame/errors.hpp"
#include "advgame/flow.hpp"
#include "advgame/losses.hpp"
#include "advgame/models.hpp"
#include "advgame/pipeline.hpp"

namespace py = pybind11;
using namespace advgame;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor2 to_tensor(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2D array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Tensor2(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor2& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

LpConstraint constraint(const std::string& p, double delta) {
  LpConstraint c{norm_from_string(p), delta};
  c.validate();
  return c;
}

Batch classification_batch(const Array& x, std::vector<std::size_t> labels) {
  Batch b;
  b.x = to_tensor(x);
  b.labels = std::move(labels);
  return b;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarial training as a two-player game between a defense and an attack network.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("x", [](const Dataset& d) { return to_array(d.x); })
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("targets", &Dataset::targets)
      .def_readonly("train", &Dataset::train)
      .def_readonly("test", &Dataset::test)
      .def_readonly("fingerprint", &Dataset::fingerprint);

  m.def(
      "generate",
      [](const std::string& family, std::size_t n, double noise, std::uint64_t seed) {
        return generate_2d(family_from_string(family), GenerateOptions{n, noise, 0.8, seed});
      },
      py::arg("family"), py::arg("n") = 2000, py::arg("noise") = 0.05, py::arg("seed") = 0);

  py::class_<DefenseNet>(m, "Defense")
      .def("forward", [](const DefenseNet& f, const Array& x) { return to_array(f.forward(to_tensor(x))); })
      .def("predict", [](const DefenseNet& f, const Array& x) { return f.predict(to_tensor(x)); })
      .def_property_readonly("param_count", [](const DefenseNet& f) { return f.net.param_count(); });

  py::class_<AttackModel>(m, "Attack")
      .def(
          "forward",
          [](const AttackModel& a, const Array& x, std::vector<std::size_t> labels) {
            return to_array(a.forward(to_tensor(x), labels));
          },
          py::arg("x"), py::arg("labels") = std::vector<std::size_t>{})
      .def_property_readonly("param_count", &AttackModel::param_count)
      .def_property_readonly("delta", [](const AttackModel& a) { return a.constraint().delta; });

  m.def(
      "build_pair",
      [](std::size_t dim, std::size_t classes, const std::string& p, double delta, std::uint64_t seed) {
        const LpConstraint c = constraint(p, delta);
        const ModelPair pair =
            classes == 0 ? build_regression_pair(dim, c, seed) : build_classification_pair(dim, classes, c, seed);
        return py::make_tuple(pair.defense, pair.attack);
      },
      py::arg("dim"), py::arg("classes"), py::arg("p") = "inf", py::arg("delta") = 0.2, py::arg("seed") = 0,
      "Defense and attack networks; classes=0 builds the regression pair.");

  m.def(
      "load_defense", [](const std::filesystem::path& p) { return load_defense(p); }, py::arg("path"));
  m.def(
      "load_attack", [](const std::filesystem::path& p) { return load_attack(p); }, py::arg("path"));

  m.def(
      "fgsm",
      [](const DefenseNet& f, const Array& x, std::vector<std::size_t> labels, double delta) {
        return to_array(fgsm(f, LossFamily::cross_entropy, classification_batch(x, std::move(labels)),
                             {Norm::linf, delta}));
      },
      py::arg("defense"), py::arg("x"), py::arg("labels"), py::arg("delta") = 0.2);

  m.def(
      "pgd",
      [](const DefenseNet& f, const Array& x, std::vector<std::size_t> labels, const std::string& p, double delta,
         double step, std::size_t steps, std::size_t restarts, std::uint64_t seed) {
        PgdConfig cfg = PgdConfig::for_constraint(constraint(p, delta));
        cfg.step = step;
        cfg.steps = steps;
        cfg.restarts = restarts;
        cfg.seed = seed;
        return to_array(pgd(f, LossFamily::cross_entropy, classification_batch(x, std::move(labels)), cfg));
      },
      py::arg("defense"), py::arg("x"), py::arg("labels"), py::arg("p") = "inf", py::arg("delta") = 0.2,
      py::arg("step") = 0.01, py::arg("steps") = 50, py::arg("restarts") = 10, py::arg("seed") = 0);

  m.def(
      "adversarial_loss",
      [](const DefenseNet& f, const AttackModel& a, const Array& x, std::vector<std::size_t> labels,
         const std::string& mix, double alpha) {
        const LossKind kind{LossFamily::cross_entropy, loss_mix_from_string(mix), alpha};
        return adversarial_loss(kind, f, a, classification_batch(x, std::move(labels))).total;
      },
      py::arg("defense"), py::arg("attack"), py::arg("x"), py::arg("labels"), py::arg("mix") = "plain",
      py::arg("alpha") = 0.0);

  m.def(
      "closed_form_attack",
      [](const std::string& model, std::vector<double> beta, std::vector<double> x, double y, double delta) {
        if (model != "logistic" && model != "linear") throw py::value_error("model must be logistic or linear");
        return closed_form_attack(model == "logistic" ? ClosedFormModel::logistic : ClosedFormModel::linear, beta, x,
                                  y, delta);
      },
      py::arg("model"), py::arg("beta"), py::arg("x"), py::arg("y"), py::arg("delta"));

  m.def(
      "flow_attack",
      [](const DefenseNet& f, std::vector<double> x, std::size_t label, const std::string& p, double delta) {
        FlowConfig cfg;
        cfg.constraint = constraint(p, delta);
        const FlowAttack a = best_attack_flow(defense_point_objective(f, LossFamily::cross_entropy, label), x, cfg);
        return py::make_tuple(a.perturbation, a.value, a.converged);
      },
      py::arg("defense"), py::arg("x"), py::arg("label"), py::arg("p") = "inf", py::arg("delta") = 0.2,
      "Best perturbation, loss value and convergence flag from the projected gradient flow.");

  m.def(
      "preset_config", [](const std::string& name) { return run_config_json(reproduce_preset(name)); },
      py::arg("name"), "Resolved JSON config of a reproduce target.");

  m.def(
      "reproduce",
      [](const std::string& config_json, const std::filesystem::path& dir) {
        const ReproduceResult r = [&] {
          py::gil_scoped_release release;
          return reproduce(parse_run_config(config_json), dir);
        }();
        return r.files;
      },
      py::arg("config_json"), py::arg("dir"), "Runs a pipeline and returns the written files.");
}
