#include <doctest.h>

#include <cmath>
#include <sstream>

#include "slutsky/symmetry.hpp"

using namespace slutsky;

namespace {
PriceIncome xp(double p1, double p2, double y) { return PriceIncome({p1, p2}, y); }
}  // namespace

TEST_SUITE("symmetry") {
  TEST_CASE("interval arithmetic at the cd0 reference point") {
    auto fam = make_family("cd0");
    const IdentifiedFunctionals fn = functionals_from_oracle(*fam, xp(1, 1, 1));

    AsymmetryInterval iv = interval_compute(fn, ElasticityBounds(1.0, 1.0), 0, 1);
    CHECK(iv.center == 0.0);
    CHECK(iv.halfwidth == 0.0);
    CHECK(iv.contains_zero);

    iv = interval_compute(fn, ElasticityBounds(0.9, 1.1), 0, 1);
    CHECK(iv.center == doctest::Approx(0.0));
    CHECK(iv.halfwidth == doctest::Approx(0.018).epsilon(1e-12));
    CHECK(iv.margin == doctest::Approx(0.018).epsilon(1e-12));
    CHECK(iv.contains_zero);

    // synthetic node: zero-width interval away from zero excludes it
    Mat dpm(2, 2);
    dpm(0, 1) = 0.1;  // D_{p2} m_1
    Mat M(2, 2);
    M(0, 1) = M(1, 0) = 0.09;
    iv = interval_from_parts(xp(1, 1, 1), dpm, M, ElasticityBounds(1.0, 1.0), 0, 1);
    CHECK(iv.center == doctest::Approx(0.1));
    CHECK(iv.halfwidth == 0.0);
    CHECK_FALSE(iv.contains_zero);
    CHECK(iv.margin == doctest::Approx(-0.1));

    CHECK_THROWS_AS(interval_compute(fn, ElasticityBounds(1.0, 1.0), 1, 0), config_error);
    CHECK_THROWS_AS(ElasticityBounds(1.2, 0.8), config_error);
  }

  TEST_CASE("family grid test: cd0 is consistent, worst margin at the far corner") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {4, 4, 4};
    const GridTestReport rep = grid_test(*fam, ElasticityBounds(0.9, 1.1), lattice);
    CHECK_FALSE(rep.reject);
    CHECK(rep.verdict == "consistent");
    // min over the lattice of 0.2 M12 / y = 0.018 y / (p1 p2), at y = 1, p = (2, 2)
    CHECK(rep.worst_margin == doctest::Approx(0.018 / 4.0).epsilon(1e-12));
    CHECK(rep.worst_x.p[0] == doctest::Approx(2.0));
    CHECK(rep.worst_x.p[1] == doctest::Approx(2.0));
    CHECK(rep.worst_x.y == doctest::Approx(1.0));
    CHECK(rep.rows.size() == 64);

    // widening the bounds never flips consistent to reject
    const GridTestReport wider = grid_test(*fam, ElasticityBounds(0.7, 1.3), lattice);
    CHECK_FALSE(wider.reject);
    for (std::size_t k = 0; k < rep.rows.size(); ++k)
      CHECK(wider.rows[k].margin >= rep.rows[k].margin);
  }

  TEST_CASE("unit elasticity cd0 has margin exactly zero everywhere") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {3, 3, 3};
    const GridTestReport rep = grid_test(*fam, ElasticityBounds(1.0, 1.0), lattice, 1e-3);
    CHECK_FALSE(rep.reject);
    for (const AsymmetryInterval& r : rep.rows) CHECK(r.margin == 0.0);
  }

  TEST_CASE("oracle dump round-trips through ingestion") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {3, 3, 3};
    lattice.box = BoxDomain({1.0, 1.0, 1.0}, {1.1, 1.1, 1.1});  // step 0.05
    std::stringstream csv;
    write_moments_csv(csv, *fam, lattice);
    const MomentGrid grid = moments_ingest(csv);
    CHECK(grid.node_count() == 27);

    // lattice finite differences against the oracle gradients
    for (std::size_t k = 0; k < grid.node_count(); ++k) {
      const MomentGrid::Node& node = grid.node(k);
      const IdentifiedFunctionals fn = functionals_from_oracle(*fam, node.x);
      const AsymmetryInterval a =
          interval_from_parts(node.x, node.dpm, node.M, ElasticityBounds(0.9, 1.1), 0, 1);
      const AsymmetryInterval b = interval_compute(fn, ElasticityBounds(0.9, 1.1), 0, 1);
      CHECK(std::abs(a.center - b.center) <= 1e-3);
      CHECK(std::abs(a.halfwidth - b.halfwidth) <= 1e-12);
      // gradient truncation: h^2/6 f''' centrally, twice that at flagged edges
      const double tol = node.edge ? 3e-3 : 1e-3;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          CHECK(std::abs(node.dpm(i, j) - fn.dpm(i, j)) <= tol);
    }
    const GridTestReport rep = grid_test(grid, ElasticityBounds(1.0, 1.0), 1e-3);
    CHECK_FALSE(rep.reject);
  }

  TEST_CASE("injected asymmetry is rejected with the prescribed margin") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {4, 4, 4};
    std::stringstream csv;
    write_moments_csv(csv, *fam, lattice, /*inject_c12_slope=*/0.1);
    const MomentGrid grid = moments_ingest(csv);
    const GridTestReport rep = grid_test(grid, ElasticityBounds(1.0, 1.0), 1e-3);
    CHECK(rep.reject);
    CHECK(rep.verdict == "reject");
    // the planted mean gradient is linear in p2, so the lattice derivative is
    // exact and the worst margin equals -0.1 up to rounding
    CHECK(rep.worst_margin <= -0.05 + 1e-3);
    CHECK(rep.worst_margin == doctest::Approx(-0.1).epsilon(1e-9));
  }

  TEST_CASE("ingestion failures carry useful messages") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {3, 3, 3};
    std::stringstream csv;
    write_moments_csv(csv, *fam, lattice);

    SUBCASE("missing node is named") {
      std::string text = csv.str();
      // drop the last data row
      text.erase(text.find_last_of('\n', text.size() - 2) + 1);
      std::stringstream broken(text);
      CHECK_THROWS_WITH_AS(moments_ingest(broken),
                           doctest::Contains("missing lattice node"), config_error);
    }
    SUBCASE("single row cannot be differentiated") {
      std::stringstream tiny;
      tiny << "p1,p2,y,m1,m2,M11,M12,M22\n";
      tiny << "1,1,1,0.3,0.3,0.0933,0.09,0.0933\n";
      CHECK_THROWS_WITH_AS(moments_ingest(tiny),
                           doctest::Contains("insufficient nodes for differentiation"),
                           config_error);
    }
    SUBCASE("non-finite value is flagged with its row") {
      std::stringstream bad;
      bad << "p1,p2,y,m1,m2,M11,M12,M22\n";
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k)
            bad << (1.0 + 0.05 * i) << "," << (1.0 + 0.05 * j) << ","
                << (1.0 + 0.05 * k) << ",0.3,0.3,0.0933," << ((i + j + k) ? "0.09" : "nan")
                << ",0.0933\n";
      CHECK_THROWS_WITH_AS(moments_ingest(bad), doctest::Contains("row 2"), config_error);
    }
    SUBCASE("wrong header is rejected") {
      std::stringstream bad;
      bad << "p1,p2,y,m1,m2,M11,M21,M22\n";
      CHECK_THROWS_AS(moments_ingest(bad), config_error);
    }
    SUBCASE("duplicate node is rejected") {
      // swap the last row for a copy of the first, keeping the row count
      std::string text = csv.str();
      text.erase(text.find_last_of('\n', text.size() - 2) + 1);
      const std::size_t first_row = text.find('\n') + 1;
      const std::size_t second_row = text.find('\n', first_row) + 1;
      text += text.substr(first_row, second_row - first_row);
      std::stringstream broken(text);
      CHECK_THROWS_WITH_AS(moments_ingest(broken), doctest::Contains("duplicate"),
                           config_error);
    }
  }

  TEST_CASE("per-node bounds columns are honored") {
    std::stringstream csv;
    csv << "p1,p2,y,m1,m2,M11,M12,M22,l,u\n";
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        csv << (1.0 + 0.1 * i) << "," << (1.0 + 0.1 * j) << ",1"
            << ",0.3,0.3,0.0933,0.09,0.0933,0.8,1.2\n";
    const MomentGrid grid = moments_ingest(csv);
    CHECK(grid.node_count() == 9);
    REQUIRE(grid.node(0).bounds.has_value());
    CHECK(grid.node(0).bounds->lower == doctest::Approx(0.8));
    // the stored bounds override the caller's
    const GridTestReport rep = grid_test(grid, ElasticityBounds(1.0, 1.0));
    for (const AsymmetryInterval& r : rep.rows)
      CHECK(r.halfwidth == doctest::Approx(0.4 * 0.09 / 1.0));
  }

  TEST_CASE("empty lattice intersection is a configuration error") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {3, 3, 3};
    lattice.box = BoxDomain({3.0, 3.0, 3.0}, {4.0, 4.0, 4.0});
    CHECK_THROWS_AS(grid_test(*fam, ElasticityBounds(1, 1), lattice), config_error);
  }

  TEST_CASE("interval csv writer emits the schema") {
    auto fam = make_family("cd0");
    LatticeSpec lattice;
    lattice.counts = {2, 2, 1};
    const GridTestReport rep = grid_test(*fam, ElasticityBounds(0.9, 1.1), lattice);
    std::stringstream out;
    write_interval_csv(out, rep, 2);
    std::string header;
    std::getline(out, header);
    CHECK(header == "i,j,p1,p2,y,center,halfwidth,margin,contains_zero");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(out, line))
      if (!line.empty()) ++rows;
    CHECK(rows == rep.rows.size());
  }
}
