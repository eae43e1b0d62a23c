#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "slutsky/identification.hpp"
#include "slutsky/symmetry.hpp"

namespace py = pybind11;
using namespace slutsky;

namespace {

PriceIncome to_x(const Vec& flat) {
  if (flat.size() < 2) throw config_error("x needs (p_1, ..., p_d, y)");
  return PriceIncome::from_flat(flat);
}

py::list mat_list(const Mat& m) {
  py::list rows;
  for (int i = 0; i < m.rows; ++i) {
    py::list row;
    for (int j = 0; j < m.cols; ++j) row.append(m(i, j));
    rows.append(row);
  }
  return rows;
}

py::dict functionals_dict(const IdentifiedFunctionals& fn) {
  py::dict d;
  d["x"] = fn.x.flat();
  d["m"] = fn.m;
  d["M"] = mat_list(fn.M);
  d["T"] = mat_list(fn.T);
  d["dpm"] = mat_list(fn.dpm);
  d["m_se"] = fn.m_se;
  d["T_se"] = mat_list(fn.T_se);
  d["oracle"] = fn.oracle;
  d["one_sided"] = fn.one_sided;
  return d;
}

py::dict marginal_dict(const MarginalDistanceReport& rep) {
  py::dict d;
  d["x"] = rep.x.flat();
  d["n"] = rep.n;
  d["ks"] = rep.ks;
  d["ks_threshold"] = rep.ks_threshold;
  d["energy"] = rep.energy;
  d["energy_baseline"] = rep.energy_baseline;
  d["pass"] = rep.pass;
  return d;
}

py::dict slutsky_dict(const SlutskyEstimate& est) {
  py::dict d;
  d["x"] = est.x.flat();
  d["n"] = est.n;
  d["S"] = mat_list(est.S);
  d["S_se"] = mat_list(est.S_se);
  d["one_sided"] = est.one_sided;
  return d;
}

FlowConfig make_config(int grid_n, int knots, int rk4_steps, int coeff_samples,
                       std::uint64_t coeff_seed) {
  FlowConfig cfg;
  cfg.grid_n = grid_n;
  cfg.leg_knots = knots;
  cfg.rk4_steps = rk4_steps;
  cfg.coeff_samples = coeff_samples;
  cfg.coeff_seed = coeff_seed;
  cfg.validate();
  return cfg;
}

/// Owns a family, a composite flow, and optionally the rotation correction
/// toward S = T/2 + C with constant C_12.
class PyFlow {
 public:
  PyFlow(const std::string& family, std::optional<double> target_c, int grid_n,
         int knots, int rk4_steps, int coeff_samples, std::uint64_t coeff_seed)
      : family_(make_family(family)),
        flow_(std::make_shared<CompositeFlow>(
            family_, make_config(grid_n, knots, rk4_steps, coeff_samples, coeff_seed))) {
    if (target_c) {
      flow_->attach_correction(
          std::make_shared<SlutskyTarget>(SlutskyTarget::constant_c12(*target_c)),
          std::make_shared<BumpFunction>(BumpFunction::standard(*family_)));
    }
  }

  Vec eval(const Vec& x, const Vec& omega) const { return flow_->eval(to_x(x), omega); }

  std::vector<Vec> push(const Vec& x, std::size_t n, std::uint64_t seed) const {
    py::gil_scoped_release release;
    return flow_->push(to_x(x), n, seed);
  }

  py::dict jacobian(const Vec& x, const Vec& omega, double h_p, double h_y) const {
    const FlowDerivatives der = flow_->jacobian_fd(to_x(x), omega, h_p, h_y);
    py::dict d;
    d["dp"] = mat_list(der.dp);
    d["dy"] = der.dy;
    d["one_sided"] = der.one_sided;
    return d;
  }

  py::dict slutsky(const Vec& x, std::size_t n, double h_p, double h_y,
                   std::uint64_t seed) const {
    SlutskyEstimate est;
    {
      py::gil_scoped_release release;
      est = estimate_average_slutsky(*flow_, to_x(x), n, h_p, h_y, seed);
    }
    return slutsky_dict(est);
  }

  py::dict marginals(const Vec& x, std::size_t n, std::uint64_t seed) const {
    MarginalDistanceReport rep;
    {
      py::gil_scoped_release release;
      rep = marginal_distance(*flow_, to_x(x), n, seed);
    }
    return marginal_dict(rep);
  }

  double richardson(const Vec& x, const Vec& omega, double h) const {
    return richardson_ratio(*flow_, to_x(x), omega, h);
  }

  bool corrected() const { return flow_->corrected(); }

  std::shared_ptr<const DemandFamily> family_;
  std::shared_ptr<CompositeFlow> flow_;
};

py::dict grid_report_dict(const GridTestReport& rep, int d) {
  py::dict out;
  out["verdict"] = rep.verdict;
  out["reject"] = rep.reject;
  out["worst_margin"] = rep.worst_margin;
  out["worst_x"] = rep.worst_x.flat();
  out["worst_pair"] = py::make_tuple(rep.worst_i + 1, rep.worst_j + 1);
  out["rows"] = rep.rows.size();
  std::ostringstream csv;
  write_interval_csv(csv, rep, d);
  out["csv"] = csv.str();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "measure-transport laboratory for stochastic demand systems";

  py::register_exception<domain_error>(m, "DomainError");
  py::register_exception<config_error>(m, "ConfigError");
  py::register_exception<numeric_error>(m, "NumericError");
  py::register_exception<unsupported_error>(m, "UnsupportedError");
  py::register_exception<inconsistency_error>(m, "InconsistencyError");

  py::class_<DemandFamily, std::shared_ptr<DemandFamily>>(m, "Family")
      .def_property_readonly("name", &DemandFamily::name)
      .def_property_readonly("dim", &DemandFamily::dim)
      .def("density",
           [](const DemandFamily& f, const Vec& x, const Vec& q) {
             return f.density(to_x(x), q);
           })
      .def("support",
           [](const DemandFamily& f, const Vec& x) {
             const BoxDomain s = f.support(to_x(x));
             return py::make_tuple(s.lower, s.upper);
           })
      .def("support_map",
           [](const DemandFamily& f, const Vec& x, const Vec& omega) {
             return f.support_map(to_x(x), omega);
           })
      .def("moments",
           [](const DemandFamily& f, const Vec& x) {
             const Moments mo = f.moments(to_x(x));
             py::dict d;
             d["m"] = mo.m;
             d["M"] = mat_list(mo.M);
             py::list dm, dM;
             for (const Vec& g : mo.dm) dm.append(g);
             for (const Mat& g : mo.dM) dM.append(mat_list(g));
             d["dm"] = dm;
             d["dM"] = dM;
             return d;
           })
      .def("sample_reference",
           [](const DemandFamily& f, std::size_t n, std::uint64_t seed) {
             return f.reference_sample(n, seed);
           })
      .def("sample_at",
           [](const DemandFamily& f, const Vec& x, std::size_t n, std::uint64_t seed) {
             return f.sample_at(to_x(x), n, seed);
           })
      .def("marginal_cdf", [](const DemandFamily& f, const Vec& x, int k, double v) {
        return f.marginal_cdf(to_x(x), k, v);
      });

  m.def(
      "make_family",
      [](const std::string& name) {
        return std::const_pointer_cast<DemandFamily>(make_family(name));
      },
      py::arg("name"));

  py::class_<PyFlow>(m, "Flow")
      .def(py::init<const std::string&, std::optional<double>, int, int, int, int,
                    std::uint64_t>(),
           py::arg("family"), py::arg("target_c") = py::none(), py::arg("grid_n") = 65,
           py::arg("knots") = 9, py::arg("rk4_steps") = 64,
           py::arg("coeff_samples") = 20000, py::arg("coeff_seed") = 101)
      .def("eval", &PyFlow::eval, py::arg("x"), py::arg("omega"))
      .def("push", &PyFlow::push, py::arg("x"), py::arg("n"), py::arg("seed"))
      .def("jacobian", &PyFlow::jacobian, py::arg("x"), py::arg("omega"),
           py::arg("h_p") = 1e-3, py::arg("h_y") = 1e-3)
      .def("slutsky", &PyFlow::slutsky, py::arg("x"), py::arg("n"),
           py::arg("h_p") = 1e-3, py::arg("h_y") = 1e-3, py::arg("seed") = 7)
      .def("marginals", &PyFlow::marginals, py::arg("x"), py::arg("n"),
           py::arg("seed") = 7)
      .def("richardson", &PyFlow::richardson, py::arg("x"), py::arg("omega"),
           py::arg("h") = 1e-3)
      .def_property_readonly("corrected", &PyFlow::corrected);

  m.def(
      "estimate_functionals",
      [](const std::shared_ptr<DemandFamily>& f, const Vec& x, std::size_t n, double h,
         std::uint64_t seed, bool prefer_oracle) {
        IdentifiedFunctionals fn;
        {
          py::gil_scoped_release release;
          fn = estimate_functionals(*f, to_x(x), n, h, seed, prefer_oracle);
        }
        return functionals_dict(fn);
      },
      py::arg("family"), py::arg("x"), py::arg("n") = 10000, py::arg("h") = 1e-3,
      py::arg("seed") = 7, py::arg("prefer_oracle") = true);

  m.def(
      "compute_coeffs",
      [](const PyFlow& flow, double c12, const Vec& x, std::size_t n,
         std::uint64_t seed) {
        RotationCoeffs rc;
        {
          py::gil_scoped_release release;
          rc = compute_coeffs(*flow.family_, SlutskyTarget::constant_c12(c12),
                              *flow.flow_, to_x(x), n, seed);
        }
        py::dict d;
        d["a"] = mat_list(rc.a);
        d["a_raw"] = mat_list(rc.a_raw);
        d["defect_se"] = mat_list(rc.defect_se);
        d["max_defect"] = rc.max_defect;
        return d;
      },
      py::arg("flow"), py::arg("c12"), py::arg("x"), py::arg("n") = 20000,
      py::arg("seed") = 7);

  m.def(
      "rotation_field",
      [](const std::shared_ptr<DemandFamily>& f, double a12, const Vec& x, const Vec& q) {
        Mat a(2, 2);
        a(0, 1) = a12;
        a(1, 0) = -a12;
        const BumpFunction bump = BumpFunction::standard(*f);
        return rotation_field(a, bump, *f, to_x(x), q);
      },
      py::arg("family"), py::arg("a12"), py::arg("x"), py::arg("q"));

  m.def(
      "nonid_demo",
      [](const std::string& family, double c, const std::vector<Vec>& xs, std::size_t n,
         std::uint64_t seed, int coeff_samples) {
        auto fam = make_family(family);
        std::vector<PriceIncome> points;
        for (const Vec& x : xs) points.push_back(to_x(x));
        FlowConfig cfg;
        cfg.coeff_samples = coeff_samples;
        NonidReport rep;
        {
          py::gil_scoped_release release;
          rep = nonid_demo(fam, c, points, n, seed, cfg);
        }
        py::dict d;
        d["pass"] = rep.pass;
        d["failures"] = rep.failures;
        py::list pts;
        for (const NonidPoint& pt : rep.points) {
          py::dict p;
          p["x"] = pt.x.flat();
          p["T"] = mat_list(pt.functionals.T);
          p["S_symmetric"] = mat_list(pt.slutsky_sym.S);
          p["S_corrected"] = mat_list(pt.slutsky_asym.S);
          p["asymmetry_symmetric"] = pt.asym_sym;
          p["asymmetry_corrected"] = pt.asym_asym;
          p["marginals_symmetric"] = marginal_dict(pt.marginal_sym);
          p["marginals_corrected"] = marginal_dict(pt.marginal_asym);
          p["pass"] = pt.pass;
          pts.append(p);
        }
        d["points"] = pts;
        return d;
      },
      py::arg("family"), py::arg("c"), py::arg("xs"), py::arg("n") = 5000,
      py::arg("seed") = 7, py::arg("coeff_samples") = 5000);

  m.def(
      "interval",
      [](const std::shared_ptr<DemandFamily>& f, const Vec& x, double lower, double upper,
         int i, int j) {
        const IdentifiedFunctionals fn = functionals_from_oracle(*f, to_x(x));
        const AsymmetryInterval iv =
            interval_compute(fn, ElasticityBounds(lower, upper), i, j);
        py::dict d;
        d["center"] = iv.center;
        d["halfwidth"] = iv.halfwidth;
        d["margin"] = iv.margin;
        d["contains_zero"] = iv.contains_zero;
        return d;
      },
      py::arg("family"), py::arg("x"), py::arg("lower"), py::arg("upper"),
      py::arg("i") = 0, py::arg("j") = 1);

  m.def(
      "sym_test",
      [](const std::shared_ptr<DemandFamily>& f, double lower, double upper,
         const std::vector<int>& counts, double slack) {
        LatticeSpec lattice;
        lattice.counts = counts;
        const GridTestReport rep =
            grid_test(*f, ElasticityBounds(lower, upper), lattice, slack);
        return grid_report_dict(rep, f->dim());
      },
      py::arg("family"), py::arg("lower"), py::arg("upper"),
      py::arg("counts") = std::vector<int>{4, 4, 4}, py::arg("slack") = 0.0);

  m.def(
      "sym_test_csv",
      [](const std::string& path, double lower, double upper, double slack) {
        const MomentGrid grid = moments_ingest_file(path);
        const GridTestReport rep = grid_test(grid, ElasticityBounds(lower, upper), slack);
        return grid_report_dict(rep, grid.dim());
      },
      py::arg("path"), py::arg("lower"), py::arg("upper"), py::arg("slack") = 0.0);

  m.def(
      "write_moments_csv",
      [](const std::string& path, const std::shared_ptr<DemandFamily>& f,
         const std::vector<int>& counts, double inject_c12_slope) {
        LatticeSpec lattice;
        lattice.counts = counts;
        std::ofstream out(path);
        if (!out) throw config_error("cannot write '" + path + "'");
        write_moments_csv(out, *f, lattice, inject_c12_slope);
      },
      py::arg("path"), py::arg("family"), py::arg("counts") = std::vector<int>{4, 4, 4},
      py::arg("inject_c12_slope") = 0.0);

  m.def("ks_two_sample", &ks_two_sample, py::arg("a"), py::arg("b"));
  m.def("energy_distance", &energy_distance, py::arg("x"), py::arg("y"),
        py::arg("cap") = 5000);

  m.def(
      "poisson_check",
      [](const std::vector<int>& sizes, double tol) {
        const ConvergenceReport rep =
            convergence_check([](int n) { return manufactured_cosine(n); }, sizes, tol);
        py::dict d;
        d["order"] = rep.order;
        d["errors"] = rep.errors;
        d["exact"] = rep.exact;
        return d;
      },
      py::arg("sizes") = std::vector<int>{33, 65, 129}, py::arg("tol") = 1e-10);

  m.attr("__version__") = "0.1.0";
}
