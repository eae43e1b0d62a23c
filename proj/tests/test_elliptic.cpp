#include <doctest.h>

#include <cmath>
#include <numbers>

#include "slutsky/elliptic.hpp"

using namespace slutsky;

TEST_SUITE("elliptic") {
  TEST_CASE("manufactured cosine solution, identity coefficient") {
    ManufacturedCase c = manufactured_cosine(65);
    SolveStats stats;
    ScalarGridField u = solve_neumann(c.problem, 1e-10, &stats);
    double err = 0.0;
    for (std::size_t k = 0; k < u.values().size(); ++k)
      err = std::max(err, std::abs(u.values()[k] - c.exact.values()[k]));
    CHECK(err <= 2e-3);
    CHECK(stats.relative_residual <= 1e-10);
    CHECK(std::abs(u.mean()) <= 1e-14);
  }

  TEST_CASE("anisotropic diagonal coefficient reproduces the same solution") {
    ManufacturedCase c = manufactured_cosine(65, 4.0, 1.0);
    SolveStats stats;
    ScalarGridField u = solve_neumann(c.problem, 1e-10, &stats);
    double err = 0.0;
    for (std::size_t k = 0; k < u.values().size(); ++k)
      err = std::max(err, std::abs(u.values()[k] - c.exact.values()[k]));
    CHECK(err <= 2e-3);
    CHECK(stats.relative_residual <= 1e-10);
    CHECK(std::abs(u.mean()) <= 1e-14);
  }

  TEST_CASE("zero rhs gives the zero solution") {
    Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 33);
    ScalarGridField u = solve_neumann(EllipticProblem::laplace(g, ScalarGridField(g)), 1e-8);
    for (double v : u.values()) CHECK(v == 0.0);
  }

  TEST_CASE("convergence order near two") {
    auto gen = [](int n) { return manufactured_cosine(n); };
    ConvergenceReport rep = convergence_check(gen, {33, 65, 129});
    CHECK(rep.order >= 1.8);
    CHECK(rep.order <= 2.2);
    CHECK_FALSE(rep.exact);

    auto gen_aniso = [](int n) { return manufactured_cosine(n, 4.0, 1.0); };
    rep = convergence_check(gen_aniso, {33, 65, 129});
    CHECK(rep.order >= 1.8);
    CHECK(rep.order <= 2.2);
  }

  TEST_CASE("full-tensor coefficient converges at second order") {
    auto gen = [](int n) { return manufactured_bump_tensor(n, 2.0, 0.5, 1.0); };
    ConvergenceReport rep = convergence_check(gen, {33, 65, 129});
    CHECK(rep.order >= 1.8);
    CHECK(rep.order <= 2.2);
  }

  TEST_CASE("zero rhs across sizes reports the exact sentinel") {
    auto gen = [](int n) {
      Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), n);
      ManufacturedCase c{EllipticProblem::laplace(g, ScalarGridField(g)),
                         ScalarGridField(g)};
      return c;
    };
    ConvergenceReport rep = convergence_check(gen, {17, 33, 65});
    CHECK(rep.exact);
    CHECK(std::isnan(rep.order));
  }

  TEST_CASE("operator is symmetric") {
    Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 17);
    CoeffField a = CoeffField::constant(g, 2.0, 0.4, 1.5);
    // spatially varying, still SPD
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i) a.a11.at(i, j) = 2.0 + 0.5 * std::sin(3.0 * g.x(i));
    EllipticProblem p(g, a, ScalarGridField(g));
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
      Vec u(g.size()), v(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) {
        u[k] = rng.uniform(-1, 1);
        v[k] = rng.uniform(-1, 1);
      }
      const Vec lu = apply_operator(p, u);
      const Vec lv = apply_operator(p, v);
      double a1 = 0, a2 = 0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        a1 += lu[k] * v[k];
        a2 += u[k] * lv[k];
      }
      CHECK(std::abs(a1 - a2) <= 1e-10 * std::max(1.0, std::abs(a1)));
    }
  }

  TEST_CASE("boundary flux stays small for the manufactured solve") {
    ManufacturedCase c = manufactured_cosine(65);
    ScalarGridField u = solve_neumann(c.problem, 1e-10);
    const VectorGridField g = grad_field(u);
    double gmax = 0.0;
    for (std::size_t k = 0; k < g.u.values().size(); ++k)
      gmax = std::max({gmax, std::abs(g.u.values()[k]), std::abs(g.v.values()[k])});
    // one-sided discrete normal derivative at the rim, bounded by truncation
    CHECK(boundary_normal_flux_max(u) <= 5e-3 * gmax);
  }

  TEST_CASE("compatibility violation is loud") {
    Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 17);
    ScalarGridField f(g, 1.0);  // pure mass
    CHECK_THROWS_AS(solve_neumann(EllipticProblem::laplace(g, f), 1e-8),
                    compatibility_error);
  }

  TEST_CASE("tolerance domain is validated") {
    ManufacturedCase c = manufactured_cosine(17);
    CHECK_THROWS_AS(solve_neumann(c.problem, 1e-1), config_error);
    CHECK_THROWS_AS(solve_neumann(c.problem, 0.0), config_error);
  }

  TEST_CASE("coefficient SPD bounds are validated") {
    Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 17);
    CHECK_THROWS_AS(EllipticProblem(g, CoeffField::constant(g, 1.0, 2.0, 1.0),
                                    ScalarGridField(g)),
                    config_error);
  }

  TEST_CASE("gradient field basics") {
    Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 65);
    ScalarGridField lin(g), cosf(g);
    using std::numbers::pi;
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i) {
        lin.at(i, j) = g.x(i);
        cosf.at(i, j) = std::cos(pi * g.x(i)) * std::cos(pi * g.y(j));
      }
    VectorGridField gl = grad_field(lin);
    for (std::size_t k = 0; k < gl.u.values().size(); ++k) {
      CHECK(gl.u.values()[k] == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(gl.v.values()[k] == doctest::Approx(0.0).epsilon(1e-12));
    }
    VectorGridField gc = grad_field(cosf);
    double err = 0.0;
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i) {
        const double ex = -pi * std::sin(pi * g.x(i)) * std::cos(pi * g.y(j));
        const double ey = -pi * std::cos(pi * g.x(i)) * std::sin(pi * g.y(j));
        err = std::max({err, std::abs(gc.u.at(i, j) - ex), std::abs(gc.v.at(i, j) - ey)});
      }
    CHECK(err <= 5e-3);
  }

  TEST_CASE("grid validation") {
    CHECK_THROWS_AS(Grid2D(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 9), config_error);
    CHECK_THROWS_AS(Grid2D(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 64), config_error);
    CHECK_NOTHROW(Grid2D(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 17));
  }

  TEST_CASE("cubic spline interpolates nodes and stays smooth") {
    Grid2D g(BoxDomain({0.0, 0.0}, {1.0, 1.0}), 33);
    ScalarGridField s(g);
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i)
        s.at(i, j) = std::sin(2.0 * g.x(i)) * std::cos(1.5 * g.y(j));
    CubicSpline2D sp(g, s.values());
    for (int j = 0; j < g.n; ++j)
      for (int i = 0; i < g.n; ++i)
        CHECK(sp.eval(g.x(i), g.y(j)) == doctest::Approx(s.at(i, j)).epsilon(1e-12));
    // interpolation error off the nodes at fourth order scale
    double err = 0.0;
    for (double x = 0.013; x < 1.0; x += 0.0617)
      for (double y = 0.029; y < 1.0; y += 0.0531)
        err = std::max(err, std::abs(sp.eval(x, y) - std::sin(2.0 * x) * std::cos(1.5 * y)));
    CHECK(err <= 5e-5);
  }
}
