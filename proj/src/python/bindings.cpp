#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "splatcone/cbf_qp.hpp"
#include "splatcone/chi2.hpp"
#include "splatcone/collision_cone.hpp"
#include "splatcone/simulator.hpp"
#include "splatcone/splat_scene.hpp"

namespace py = pybind11;
using namespace splatcone;

namespace {

Quat quat_from_wxyz(const Eigen::Vector4d& q) { return Quat(q[0], q[1], q[2], q[3]); }

Eigen::MatrixX3d stack_rows(const std::vector<Vec3>& points) {
  Eigen::MatrixX3d out(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  }
  return out;
}

py::dict trajectory_dict(const TrajectoryRecord& rec) {
  std::vector<Vec3> velocities, controls;
  std::vector<double> times, min_h;
  for (const TrajectorySample& s : rec.samples) {
    times.push_back(s.t);
    velocities.push_back(s.v);
    controls.push_back(s.u);
    min_h.push_back(s.min_h);
  }
  py::dict d;
  d["outcome"] = to_string(rec.outcome);
  d["t"] = times;
  d["positions"] = stack_rows(rec.positions());
  d["velocities"] = stack_rows(velocities);
  d["controls"] = stack_rows(controls);
  d["min_h"] = min_h;
  d["min_clearance"] = rec.audit.min_clearance;
  d["collided"] = rec.audit.collided;
  d["interventions"] = rec.interventions;
  if (rec.first_intervention) d["first_intervention_distance"] = rec.first_intervention_distance;
  else d["first_intervention_distance"] = py::none();
  if (rec.samples.size() >= 4) {
    const SmoothnessMetrics m = compute_metrics(rec);
    d["metrics"] = py::dict(py::arg("nJ") = m.nJ, py::arg("rmsJ") = m.rmsJ,
                            py::arg("isj") = m.isj, py::arg("path_length") = m.path_length,
                            py::arg("duration") = m.duration);
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(splatcone, m) {
  m.doc() = "Collision-cone safety filter over Gaussian splat scenes";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<IoError>(m, "IoError", error.ptr());
  py::register_exception<SolverError>(m, "SolverError", error.ptr());

  m.def("default_confidence", &default_confidence, "c^2 = chi2(3) quantile at 0.99");
  m.def("chi2_confidence", &chi2_confidence, py::arg("dof"), py::arg("quantile"));

  py::class_<Splat>(m, "Splat")
      .def_readonly("mean", &Splat::mean)
      .def_readonly("scales", &Splat::scales)
      .def_readonly("opacity", &Splat::opacity)
      .def_readonly("inv_cov", &Splat::inv_cov)
      .def_readonly("whitening", &Splat::whitening)
      .def_property_readonly("rotation", [](const Splat& s) {
        return Eigen::Vector4d(s.rotation.w(), s.rotation.x(), s.rotation.y(), s.rotation.z());
      })
      .def("covariance", &Splat::covariance);

  m.def(
      "make_splat",
      [](const Vec3& mean, const Eigen::Vector4d& wxyz, const Vec3& scales, double opacity) {
        return make_splat(mean, quat_from_wxyz(wxyz), scales, opacity);
      },
      py::arg("mean"), py::arg("rotation_wxyz"), py::arg("scales"), py::arg("opacity") = 1.0);

  py::class_<Scene>(m, "Scene")
      .def(py::init<std::vector<Splat>, double>(), py::arg("splats"),
           py::arg("confidence") = default_confidence())
      .def("__len__", &Scene::size)
      .def("__getitem__",
           [](const Scene& s, std::size_t i) {
             if (i >= s.size()) throw py::index_error();
             return s[i];
           })
      .def_property_readonly("confidence", &Scene::confidence)
      .def("query_nearby", &Scene::query_nearby, py::arg("p"), py::arg("radius"));

  m.def(
      "load_scene",
      [](const std::filesystem::path& path, double opacity_min) {
        PreprocessOptions opts;
        opts.opacity_min = opacity_min;
        return load_scene_file(path, opts);
      },
      py::arg("path"), py::arg("opacity_min") = 0.1);
  m.def("write_scene_dump", &write_scene_dump, py::arg("path"), py::arg("scene"));
  m.def(
      "synthetic_scene",
      [](const std::string& pattern, std::size_t count, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.pattern = parse_scene_pattern(pattern);
        spec.count = count;
        return make_synthetic_scene(spec, seed);
      },
      py::arg("pattern") = "ring", py::arg("count") = 2000, py::arg("seed") = 7);

  py::enum_<ConeStatus>(m, "ConeStatus")
      .value("clear", ConeStatus::clear)
      .value("in_cone", ConeStatus::in_cone)
      .value("inside_ellipsoid", ConeStatus::inside_ellipsoid)
      .value("zero_velocity", ConeStatus::zero_velocity);

  py::class_<RelativeGeometry>(m, "RelativeGeometry")
      .def_readonly("r", &RelativeGeometry::r)
      .def_readonly("v", &RelativeGeometry::v)
      .def_readonly("A", &RelativeGeometry::A)
      .def_readonly("c2", &RelativeGeometry::c2)
      .def_property_readonly("beta", &RelativeGeometry::beta)
      .def_property_readonly("delta", &RelativeGeometry::delta)
      .def_property_readonly("gamma", &RelativeGeometry::gamma);

  m.def("relative_geometry", &relative_geometry, py::arg("splat"), py::arg("p"), py::arg("v"),
        py::arg("c2"));
  m.def("barrier_value", &barrier_value);
  m.def("classify_cone", &classify_cone);
  m.def("in_forward_cone", [](const RelativeGeometry& g) {
    try {
      return in_forward_cone(g);
    } catch (const ConePreconditionError& e) {
      throw ConfigError(e.what());
    }
  });
  m.def("lie_derivative_w", &lie_derivative_w);
  m.def(
      "inflated_radius",
      [](const RelativeGeometry& g, const Vec3& scales, double rho, const std::string& mode) {
        const InflationResult r = inflate(g, scales, rho, parse_inflation_mode(mode));
        return py::make_tuple(r.c_M, r.grad_cM_p, r.grad_cM_v);
      },
      py::arg("geometry"), py::arg("scales"), py::arg("rho"), py::arg("mode") = "exact");

  py::class_<FilterConfig>(m, "FilterConfig")
      .def(py::init<>())
      .def_readwrite("p_k", &FilterConfig::p_k)
      .def_readwrite("activation_radius", &FilterConfig::activation_radius)
      .def_readwrite("activation_horizon", &FilterConfig::activation_horizon)
      .def_readwrite("rho", &FilterConfig::rho)
      .def_readwrite("a_max", &FilterConfig::a_max)
      .def_readwrite("v_max", &FilterConfig::v_max)
      .def_readwrite("dt", &FilterConfig::dt)
      .def_property(
          "slack", [](const FilterConfig& c) { return to_string(c.slack); },
          [](FilterConfig& c, const std::string& s) { c.slack = parse_slack_policy(s); })
      .def_property(
          "inflation", [](const FilterConfig& c) { return to_string(c.inflation); },
          [](FilterConfig& c, const std::string& s) { c.inflation = parse_inflation_mode(s); });

  m.def(
      "filter_step",
      [](const Scene& scene, const Vec3& p, const Vec3& v, const Vec3& u_ref,
         const FilterConfig& cfg) {
        RobotState state;
        state.p = p;
        state.v = v;
        const FilterStepResult r = filter_step(scene, state, u_ref, cfg);
        py::dict d;
        d["u"] = r.solution.u;
        d["status"] = to_string(r.solution.status);
        d["min_h"] = r.min_h;
        d["candidates"] = r.candidates;
        d["active_ids"] = r.solution.active_ids;
        return d;
      },
      py::arg("scene"), py::arg("p"), py::arg("v"), py::arg("u_ref"),
      py::arg("config") = FilterConfig{});

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_property(
          "filter", [](const SimConfig& c) { return to_string(c.filter); },
          [](SimConfig& c, const std::string& s) { c.filter = parse_filter_kind(s); })
      .def_readwrite("filter_config", &SimConfig::filter_cfg)
      .def_readwrite("timeout", &SimConfig::timeout)
      .def_property(
          "kp", [](const SimConfig& c) { return c.gains.kp; },
          [](SimConfig& c, double kp) { c.gains.kp = kp; })
      .def_property(
          "kd", [](const SimConfig& c) { return c.gains.kd; },
          [](SimConfig& c, double kd) { c.gains.kd = kd; });

  m.def(
      "run_trajectory",
      [](const Scene& scene, const Vec3& start, const Vec3& goal, const SimConfig& cfg) {
        TrajectoryRecord rec;
        {
          py::gil_scoped_release release;
          rec = run_trajectory(scene, start, goal, cfg);
        }
        return trajectory_dict(rec);
      },
      py::arg("scene"), py::arg("start"), py::arg("goal"), py::arg("config") = SimConfig{});
}
