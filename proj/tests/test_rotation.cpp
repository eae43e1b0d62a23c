#include <doctest.h>

#include <cmath>

#include "slutsky/identification.hpp"
#include "slutsky/rotation.hpp"
#include "slutsky/stats.hpp"

using namespace slutsky;

namespace {
PriceIncome xp(double p1, double p2, double y) { return PriceIncome({p1, p2}, y); }
}  // namespace

TEST_SUITE("rotation") {
  TEST_CASE("bump normalization and margin rule") {
    Cd0Family f;
    BumpFunction b = BumpFunction::standard(f);
    CHECK(b.radius() == doctest::Approx(0.08));
    // independent check of the unit integral on a finer midpoint grid
    const int m = 512;
    const double h = 2 * b.radius() / m;
    double mass = 0.0;
    Vec w(2);
    for (int j = 0; j < m; ++j) {
      w[1] = b.center()[1] - b.radius() + (j + 0.5) * h;
      for (int i = 0; i < m; ++i) {
        w[0] = b.center()[0] - b.radius() + (i + 0.5) * h;
        mass += b.value(w);
      }
    }
    mass *= h * h;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

    // ball touching the margin limit is rejected
    CHECK_THROWS_AS(BumpFunction({0.3, 0.3}, 0.09, f.reference_box()), config_error);
    CHECK_THROWS_AS(BumpFunction({0.36, 0.3}, 0.05, f.reference_box()), config_error);
  }

  TEST_CASE("bump value and gradient structure") {
    Cd0Family f;
    BumpFunction b = BumpFunction::standard(f);
    CHECK(b.value({0.3, 0.3}) > 0.0);
    Vec g0 = b.gradient(b.center());
    CHECK(g0[0] == 0.0);
    CHECK(g0[1] == 0.0);
    CHECK(b.value({0.39, 0.3}) == 0.0);

    // gradient against central differences
    const double h = 1e-7;
    for (const Vec w : {Vec{0.33, 0.28}, Vec{0.26, 0.345}}) {
      const Vec g = b.gradient(w);
      for (int k = 0; k < 2; ++k) {
        Vec wp = w, wm = w;
        wp[k] += h;
        wm[k] -= h;
        const double fd = (b.value(wp) - b.value(wm)) / (2 * h);
        CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("bump_eval pushes forward as a unit-mass density") {
    Cd0Family f;
    BumpFunction b = BumpFunction::standard(f);
    const PriceIncome x = xp(1.5, 1.2, 1.4);
    const Vec qc = f.support_map(x, b.center());
    auto [vc, gc] = bump_eval(b, f, x, qc);
    CHECK(vc > 0.0);
    CHECK(std::abs(gc[0]) <= 1e-9);
    CHECK(std::abs(gc[1]) <= 1e-9);
    auto [vo, go] = bump_eval(b, f, x, {0.37, 0.2});  // outside the mapped ball
    CHECK(vo == 0.0);
    CHECK(go[0] == 0.0);
    CHECK(go[1] == 0.0);

    // midpoint integral of psi_x over the support is one (the detA-corrected
    // pushforward), within 1e-4
    const BoxDomain s = f.support(x);
    const int m = 256;
    const double hx = s.side(0) / m, hy = s.side(1) / m;
    double mass = 0.0;
    Vec q(2);
    for (int j = 0; j < m; ++j) {
      q[1] = s.lower[1] + (j + 0.5) * hy;
      for (int i = 0; i < m; ++i) {
        q[0] = s.lower[0] + (i + 0.5) * hx;
        mass += bump_eval(b, f, x, q).first;
      }
    }
    mass *= hx * hy;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }

  TEST_CASE("slutsky target validation and grid interpolation") {
    Mat bad(2, 2);
    bad(0, 1) = 0.05;
    bad(1, 0) = 0.04;
    CHECK_THROWS_AS(SlutskyTarget{bad}, config_error);

    SlutskyTarget t = SlutskyTarget::constant_c12(0.05);
    Mat c = t.antisymmetric_part(xp(1.3, 1.8, 1.1));
    CHECK(c(0, 1) == 0.05);
    CHECK(c(1, 0) == -0.05);
    CHECK(c(0, 0) == 0.0);

    // bilinear-in-grid target reproduces corner values and interpolates
    std::vector<Vec> axes{{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
    Vec vals(8);
    for (int k = 0; k < 8; ++k) vals[k] = 0.01 * k;
    SlutskyTarget tg = SlutskyTarget::from_grid(axes, vals);
    CHECK(tg.antisymmetric_part(xp(1, 1, 1))(0, 1) == doctest::Approx(0.0));
    CHECK(tg.antisymmetric_part(xp(2, 2, 2))(0, 1) == doctest::Approx(0.07));
    CHECK(tg.antisymmetric_part(xp(1.5, 1.5, 1.5))(0, 1) == doctest::Approx(0.035));
  }

  TEST_CASE("cd0 coefficients: zero target snaps to zero, constant shifts by c") {
    auto fam = make_family("cd0");
    FlowConfig cfg;
    CompositeFlow flow(fam, cfg);
    const PriceIncome x = xp(1, 1, 1);

    RotationCoeffs rc0 =
        compute_coeffs(*fam, SlutskyTarget::constant_c12(0.0), flow, x, 20000, 5);
    // raw entries carry symmetric Monte Carlo noise; the antisymmetrized
    // coefficient cancels it pathwise and snaps to an exact zero
    CHECK(rc0.a(0, 1) == 0.0);
    CHECK(rc0.a(1, 0) == 0.0);
    CHECK(std::abs(rc0.a_raw(0, 1) + rc0.a_raw(1, 0)) <= 5 * rc0.defect_se(0, 1));
    // pathwise cancellation: the antisymmetrized value sits at rounding level
    CHECK(std::abs(0.5 * (rc0.a_raw(0, 1) - rc0.a_raw(1, 0))) <= 1e-12);

    RotationCoeffs rc =
        compute_coeffs(*fam, SlutskyTarget::constant_c12(0.05), flow, x, 20000, 5);
    CHECK(rc.a(0, 1) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(rc.a(1, 0) == doctest::Approx(-0.05).epsilon(1e-9));
    CHECK(rc.a(0, 0) == 0.0);
    CHECK(rc.a(1, 1) == 0.0);
    CHECK(std::abs(rc.a_raw(0, 0)) <= 5 * std::max(rc.defect_se(0, 0), 1e-15));
  }

  TEST_CASE("tilt coefficients are finite and antisymmetric") {
    auto fam = make_family("tilt");
    FlowConfig cfg;
    CompositeFlow flow(fam, cfg);
    const PriceIncome x = xp(1.1, 1.05, 1.15);
    RotationCoeffs rc =
        compute_coeffs(*fam, SlutskyTarget::constant_c12(0.02), flow, x, 20000, 5);
    CHECK(std::isfinite(rc.a(0, 1)));
    CHECK(rc.a(0, 1) + rc.a(1, 0) == 0.0);
    // the Step-1 tilt flow is not symmetric, so a carries more than C
    CHECK(rc.a(0, 1) != doctest::Approx(0.02).epsilon(1e-6));
  }

  TEST_CASE("coefficient consistency check catches a mismatched flow") {
    auto cd0 = make_family("cd0");
    auto tilt = make_family("tilt");
    FlowConfig cfg;
    CompositeFlow tflow(tilt, cfg);
    // CD0 oracle moments against the tilt flow's E-term: defect far beyond SE
    CHECK_THROWS_AS(
        compute_coeffs(*cd0, SlutskyTarget::constant_c12(0.0), tflow, xp(1.1, 1.1, 1.1),
                       20000, 5),
        inconsistency_error);
  }

  TEST_CASE("rotation field: zeros and the moment identity") {
    auto fam = make_family("cd0");
    BumpFunction b = BumpFunction::standard(*fam);
    Mat a0(2, 2);
    const PriceIncome x0 = xp(1, 1, 1);
    Vec w = rotation_field(a0, b, *fam, x0, {0.3, 0.3});
    CHECK(w[0] == 0.0);
    CHECK(w[1] == 0.0);

    Mat a(2, 2);
    a(0, 1) = 0.05;
    a(1, 0) = -0.05;
    w = rotation_field(a, b, *fam, x0, {0.399, 0.399});
    CHECK(w[0] == 0.0);  // outside the bump support, exactly
    CHECK(w[1] == 0.0);

    // MC moment identity  E[w_i q_j] = a_ij  at three price-income pairs
    for (const PriceIncome& x : {xp(1, 1, 1), xp(1.5, 1.2, 1.4), xp(2, 1.6, 1.1)}) {
      const std::size_t n = 100000;
      MeanAccumulator m01, m10, m00;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec q = fam->sample_point_at(x, 77, i);
        const Vec wv = rotation_field(a, b, *fam, x, q);
        m01.add(wv[0] * q[1]);
        m10.add(wv[1] * q[0]);
        m00.add(wv[0] * q[0]);
      }
      CHECK(std::abs(m01.mean() - 0.05) <=
            std::max(4 * m01.standard_error(), 1e-3));
      CHECK(std::abs(m10.mean() + 0.05) <=
            std::max(4 * m10.standard_error(), 1e-3));
      CHECK(std::abs(m00.mean()) <= std::max(4 * m00.standard_error(), 1e-3));
    }
  }

  TEST_CASE("moment identity for the tilt family") {
    auto fam = make_family("tilt");
    BumpFunction b = BumpFunction::standard(*fam);
    Mat a(2, 2);
    a(0, 1) = 0.02;
    a(1, 0) = -0.02;
    const PriceIncome x = xp(1.05, 1.02, 1.18);
    const std::size_t n = 100000;
    MeanAccumulator m01, m10;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec q = fam->sample_point_at(x, 78, i);
      const Vec wv = rotation_field(a, b, *fam, x, q);
      m01.add(wv[0] * q[1]);
      m10.add(wv[1] * q[0]);
    }
    CHECK(std::abs(m01.mean() - 0.02) <= std::max(4 * m01.standard_error(), 1e-3));
    CHECK(std::abs(m10.mean() + 0.02) <= std::max(4 * m10.standard_error(), 1e-3));
  }

  TEST_CASE("weighted divergence vanishes to discretization accuracy") {
    auto fam = make_family("cd0");
    BumpFunction b = BumpFunction::standard(*fam);
    Mat a(2, 2);
    a(0, 1) = 0.05;
    a(1, 0) = -0.05;
    const PriceIncome x = xp(1.5, 1.2, 1.4);
    // local grid over the mapped bump ball
    Vec lo = fam->support_map(x, {b.center()[0] - b.radius(), b.center()[1] - b.radius()});
    Vec hi = fam->support_map(x, {b.center()[0] + b.radius(), b.center()[1] + b.radius()});
    const int m = 257;
    const double hx = (hi[0] - lo[0]) / (m - 1), hy = (hi[1] - lo[1]) / (m - 1);
    std::vector<Vec> rw(static_cast<std::size_t>(m) * m, Vec(2, 0.0));
    Vec q(2);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) {
        q[0] = lo[0] + i * hx;
        q[1] = lo[1] + j * hy;
        const Vec wv = rotation_field(a, b, *fam, x, q);
        const double rho = fam->density(x, q);
        rw[static_cast<std::size_t>(j) * m + i] = {rho * wv[0], rho * wv[1]};
      }
    double div2 = 0.0, field2 = 0.0;
    for (int j = 1; j + 1 < m; ++j)
      for (int i = 1; i + 1 < m; ++i) {
        const auto& xp1 = rw[static_cast<std::size_t>(j) * m + i + 1];
        const auto& xm1 = rw[static_cast<std::size_t>(j) * m + i - 1];
        const auto& yp1 = rw[static_cast<std::size_t>(j + 1) * m + i];
        const auto& ym1 = rw[static_cast<std::size_t>(j - 1) * m + i];
        const double div = (xp1[0] - xm1[0]) / (2 * hx) + (yp1[1] - ym1[1]) / (2 * hy);
        div2 += div * div;
        const auto& c = rw[static_cast<std::size_t>(j) * m + i];
        field2 += c[0] * c[0] + c[1] * c[1];
      }
    const double scale = 0.5 * (hi[0] - lo[0]);  // mapped bump radius
    CHECK(std::sqrt(div2) * scale <= 1e-2 * std::sqrt(field2));

    // the field vanishes identically on the support boundary
    const BoxDomain s = fam->support(x);
    for (double t : {0.0, 0.3, 0.77, 1.0}) {
      Vec qb{s.lower[0] + t * s.side(0), s.lower[1]};
      Vec wv = rotation_field(a, b, *fam, x, qb);
      CHECK(wv[0] == 0.0);
      CHECK(wv[1] == 0.0);
    }
  }

  TEST_CASE("zero correction on cd0 is bitwise step 1") {
    auto fam = make_family("cd0");
    FlowConfig cfg;
    CompositeFlow plain(fam, cfg);
    CompositeFlow corrected(fam, cfg);
    corrected.attach_correction(
        std::make_shared<SlutskyTarget>(SlutskyTarget::constant_c12(0.0)),
        std::make_shared<BumpFunction>(BumpFunction::standard(*fam)));
    const PriceIncome x = xp(1.5, 1.2, 1.4);
    for (std::size_t i = 0; i < 200; ++i) {
      const Vec omega = fam->reference_sample_point(4, i);
      const Vec a = plain.eval(x, omega);
      const Vec b = corrected.eval(x, omega);
      CHECK(a[0] == b[0]);
      CHECK(a[1] == b[1]);
    }
  }

  TEST_CASE("corrected flows preserve the marginals") {
    struct Case {
      std::string family;
      double c;
      PriceIncome x;
    };
    const std::vector<Case> cases{{"cd0", 0.05, xp(1.5, 1.2, 1.4)},
                                  {"tilt", 0.02, xp(1.1, 1.05, 1.15)}};
    for (const Case& cs : cases) {
      auto fam = make_family(cs.family);
      FlowConfig cfg;
      CompositeFlow step1(fam, cfg);
      CompositeFlow corrected(fam, cfg);
      corrected.attach_correction(
          std::make_shared<SlutskyTarget>(SlutskyTarget::constant_c12(cs.c)),
          std::make_shared<BumpFunction>(BumpFunction::standard(*fam)));
      const std::size_t n = 20000;
      const auto pushed = corrected.push(cs.x, n, 31337);
      const auto base = step1.push(cs.x, n, 31337);
      const auto oracle = fam->sample_at(cs.x, n, 99991);
      bool trajectories_differ = false;
      for (std::size_t i = 0; i < n; ++i)
        trajectories_differ =
            trajectories_differ || pushed[i][0] != base[i][0] || pushed[i][1] != base[i][1];
      CHECK(trajectories_differ);  // the correction genuinely moves samples
      for (int k = 0; k < 2; ++k) {
        const double ks_corr = ks_two_sample(column_of(pushed, k), column_of(oracle, k));
        const double ks_base = ks_two_sample(column_of(base, k), column_of(oracle, k));
        CHECK(ks_corr <= 0.02);
        CHECK(ks_corr <= ks_base + 0.005);
      }
    }
  }

  TEST_CASE("attach_correction guards") {
    auto fam = make_family("cd0");
    FlowConfig cfg;
    CompositeFlow flow(fam, cfg);
    auto t = std::make_shared<SlutskyTarget>(SlutskyTarget::constant_c12(0.01));
    auto b = std::make_shared<BumpFunction>(BumpFunction::standard(*fam));
    flow.attach_correction(t, b);
    CHECK_THROWS_AS(flow.attach_correction(t, b), config_error);
  }
}
