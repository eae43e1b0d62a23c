#ifndef SLUTSKY_SYMMETRY_HPP
#define SLUTSKY_SYMMETRY_HPP

#include <iosfwd>
#include <optional>
#include <string>

#include "slutsky/functionals.hpp"

namespace slutsky {

/// Uniform income-elasticity bounds l(x) <= eps_i(x) <= u(x) (constants here;
/// ingested grids may carry per-node values).
struct ElasticityBounds {
  double lower = 1.0;
  double upper = 1.0;

  ElasticityBounds() = default;
  ElasticityBounds(double l, double u) : lower(l), upper(u) {
    if (!(l <= u)) throw config_error("ElasticityBounds: lower must not exceed upper");
  }
};

/// The interval I_ij(x) for the asymmetry (E S)_ij - (E S)_ji, i < j:
/// center +- halfwidth with center = D_pj m_i - D_pi m_j and halfwidth
/// = (u - l)/y * M_ij.
struct AsymmetryInterval {
  PriceIncome x;
  int i = 0;
  int j = 1;
  double center = 0.0;
  double halfwidth = 0.0;
  double margin = 0.0;  // halfwidth - |center|
  bool contains_zero = false;
};

AsymmetryInterval interval_compute(const IdentifiedFunctionals& fn,
                                   const ElasticityBounds& bounds, int i, int j);
/// Low-level form used for ingested grid nodes.
AsymmetryInterval interval_from_parts(const PriceIncome& x, const Mat& dpm, const Mat& M,
                                      const ElasticityBounds& bounds, int i, int j);

/// Rectangular lattice of empirical moments with finite-difference gradients.
class MomentGrid {
 public:
  int dim() const { return d_; }
  const std::vector<Vec>& axes() const { return axes_; }
  std::size_t node_count() const { return nodes_.size(); }

  struct Node {
    PriceIncome x;
    Vec m;
    Mat M;
    Mat dpm;                // D_{p_j} m_i by lattice differences
    bool edge = false;      // one-sided difference used on some price axis
    std::optional<ElasticityBounds> bounds;  // per-node l,u columns when present
  };
  const Node& node(std::size_t k) const { return nodes_[k]; }

  friend MomentGrid moments_ingest(std::istream& in);

 private:
  int d_ = 0;
  std::vector<Vec> axes_;  // d+1 ascending coordinate vectors
  std::vector<Node> nodes_;
};

/// Parses the CSV schema  p1,...,pd,y,m1,...,md,M11,M12,...,Mdd[,l,u]
/// (M upper triangle, row-major).  Rows must form a complete lattice; price
/// axes need at least three nodes for differentiation.  Errors carry row
/// numbers or the missing node's coordinates.
MomentGrid moments_ingest(std::istream& in);
MomentGrid moments_ingest_file(const std::string& path);

/// Uniform lattice specification over the family box (or a sub-box).
struct LatticeSpec {
  std::vector<int> counts;  // d+1 entries, each >= 1
  std::optional<BoxDomain> box;
};

struct GridTestReport {
  std::vector<AsymmetryInterval> rows;
  double slack = 0.0;
  bool reject = false;
  std::string verdict;  // "consistent" or "reject"
  double worst_margin = 0.0;
  PriceIncome worst_x;
  int worst_i = 0;
  int worst_j = 1;
};

/// H0 check  0 in I_ij(x)  for all i < j over a lattice; reject iff some
/// margin < -slack.  The family overload uses oracle moments and gradients.
GridTestReport grid_test(const DemandFamily& family, const ElasticityBounds& bounds,
                         const LatticeSpec& lattice, double slack = 0.0);
GridTestReport grid_test(const MomentGrid& grid, const ElasticityBounds& bounds,
                         double slack = 0.0);

/// Writes the interval rows as CSV: i,j,p1,...,pd,y,center,halfwidth,margin,contains_zero.
void write_interval_csv(std::ostream& out, const GridTestReport& report, int d);

/// Oracle moment dump in the moments_ingest schema.  `inject_c12_slope` adds
/// slope * (p2 - p2_lower) to m1, planting the asymmetry of a constructed
/// system into the mean gradients (negative-control data).
void write_moments_csv(std::ostream& out, const DemandFamily& family,
                       const LatticeSpec& lattice, double inject_c12_slope = 0.0);

/// Lattice nodes for a spec (validated against the family box).
std::vector<PriceIncome> lattice_nodes(const DemandFamily& family,
                                       const LatticeSpec& lattice);

}  // namespace slutsky

#endif  // SLUTSKY_SYMMETRY_HPP
