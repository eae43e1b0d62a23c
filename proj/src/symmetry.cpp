#include "slutsky/symmetry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace slutsky {

AsymmetryInterval interval_from_parts(const PriceIncome& x, const Mat& dpm, const Mat& M,
                                      const ElasticityBounds& bounds, int i, int j) {
  if (!(i < j)) throw config_error("interval_compute: pairs are indexed i < j");
  AsymmetryInterval out;
  out.x = x;
  out.i = i;
  out.j = j;
  out.center = dpm(i, j) - dpm(j, i);  // D_{p_j} m_i - D_{p_i} m_j
  out.halfwidth = (bounds.upper - bounds.lower) / x.y * M(i, j);
  out.margin = out.halfwidth - std::abs(out.center);
  out.contains_zero = out.margin >= 0.0;
  return out;
}

AsymmetryInterval interval_compute(const IdentifiedFunctionals& fn,
                                   const ElasticityBounds& bounds, int i, int j) {
  return interval_from_parts(fn.x, fn.dpm, fn.M, bounds, i, j);
}

// ------------------------------ ingestion -----------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(ch))) {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, std::size_t row) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    if (!std::isfinite(v))
      throw config_error("moments_ingest: non-finite value at row " + std::to_string(row));
    return v;
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error("moments_ingest: cannot parse '" + tok + "' at row " +
                       std::to_string(row));
  }
}

// Derivative of the quadratic through (t_k, f_k) evaluated at `at`.
double quad_fit_derivative(const double t[3], const double f[3], double at) {
  const double d01 = t[0] - t[1], d02 = t[0] - t[2], d12 = t[1] - t[2];
  return f[0] * (2 * at - t[1] - t[2]) / (d01 * d02) -
         f[1] * (2 * at - t[0] - t[2]) / (d01 * d12) +
         f[2] * (2 * at - t[0] - t[1]) / (d02 * d12);
}

std::string format_x(const Vec& flat) {
  std::string s = "p=(";
  for (std::size_t k = 0; k + 1 < flat.size(); ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", flat[k]);
    s += buf;
    if (k + 2 < flat.size()) s += ",";
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", flat.back());
  s += "), y=";
  s += buf;
  return s;
}

}  // namespace

MomentGrid moments_ingest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw config_error("moments_ingest: empty input");
  const auto header = split_csv(line);

  int d = 0;
  while (d < static_cast<int>(header.size()) && header[d] == "p" + std::to_string(d + 1))
    ++d;
  if (d < 1 || static_cast<std::size_t>(d) >= header.size() || header[d] != "y")
    throw config_error("moments_ingest: header must start with p1,...,pd,y");
  std::vector<std::string> expected;
  for (int k = 1; k <= d; ++k) expected.push_back("m" + std::to_string(k));
  for (int i = 1; i <= d; ++i)
    for (int j = i; j <= d; ++j)
      expected.push_back("M" + std::to_string(i) + std::to_string(j));
  const std::size_t fixed = static_cast<std::size_t>(d) + 1 + expected.size();
  bool has_bounds = false;
  if (header.size() == fixed + 2 && header[fixed] == "l" && header[fixed + 1] == "u")
    has_bounds = true;
  else if (header.size() != fixed)
    throw config_error("moments_ingest: header does not match the moment schema");
  for (std::size_t k = 0; k < expected.size(); ++k)
    if (header[d + 1 + k] != expected[k])
      throw config_error("moments_ingest: unexpected column '" + header[d + 1 + k] +
                         "' (expected '" + expected[k] + "')");

  struct Row {
    Vec coords;
    Vec values;
    std::size_t line_no;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    bool blank = true;
    for (char ch : line) blank = blank && std::isspace(static_cast<unsigned char>(ch));
    if (blank) continue;
    const auto toks = split_csv(line);
    if (toks.size() != header.size())
      throw config_error("moments_ingest: wrong column count at row " +
                         std::to_string(line_no));
    Row r;
    r.line_no = line_no;
    for (int k = 0; k <= d; ++k) r.coords.push_back(parse_double(toks[k], line_no));
    for (std::size_t k = d + 1; k < toks.size(); ++k)
      r.values.push_back(parse_double(toks[k], line_no));
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw config_error("moments_ingest: no data rows");

  // Assemble the lattice axes.
  MomentGrid grid;
  grid.d_ = d;
  grid.axes_.assign(d + 1, Vec{});
  for (int k = 0; k <= d; ++k) {
    Vec vals;
    for (const Row& r : rows) vals.push_back(r.coords[k]);
    std::sort(vals.begin(), vals.end());
    Vec axis;
    for (double v : vals)
      if (axis.empty() || v > axis.back() + 1e-9) axis.push_back(v);
    grid.axes_[k] = std::move(axis);
  }
  for (int k = 0; k < d; ++k)
    if (grid.axes_[k].size() < 3)
      throw config_error("moments_ingest: insufficient nodes for differentiation "
                         "(price axis p" +
                         std::to_string(k + 1) + " has fewer than 3 values)");

  std::size_t total = 1;
  for (const Vec& ax : grid.axes_) total *= ax.size();

  auto axis_index = [&](int k, double v, std::size_t row) {
    const Vec& ax = grid.axes_[k];
    const auto it = std::lower_bound(ax.begin(), ax.end(), v - 1e-9);
    if (it == ax.end() || std::abs(*it - v) > 1e-9)
      throw config_error("moments_ingest: off-lattice coordinate at row " +
                         std::to_string(row));
    return static_cast<std::size_t>(it - ax.begin());
  };

  const std::size_t nvals = expected.size() + (has_bounds ? 2 : 0);
  std::vector<Vec> flat_values(total);
  std::vector<bool> seen(total, false);
  for (const Row& r : rows) {
    std::size_t idx = 0;
    for (int k = 0; k <= d; ++k) idx = idx * grid.axes_[k].size() + axis_index(k, r.coords[k], r.line_no);
    if (seen[idx])
      throw config_error("moments_ingest: duplicate lattice node at row " +
                         std::to_string(r.line_no));
    seen[idx] = true;
    if (r.values.size() != nvals)
      throw config_error("moments_ingest: wrong value count at row " +
                         std::to_string(r.line_no));
    flat_values[idx] = r.values;
  }
  for (std::size_t idx = 0; idx < total; ++idx)
    if (!seen[idx]) {
      Vec coords(d + 1);
      std::size_t rem = idx;
      for (int k = d; k >= 0; --k) {
        coords[k] = grid.axes_[k][rem % grid.axes_[k].size()];
        rem /= grid.axes_[k].size();
      }
      throw config_error("moments_ingest: missing lattice node " + format_x(coords));
    }

  // Build nodes with price-gradient finite differences.
  std::vector<std::size_t> sizes(d + 1);
  for (int k = 0; k <= d; ++k) sizes[k] = grid.axes_[k].size();
  auto flat_of = [&](const std::vector<std::size_t>& mi) {
    std::size_t idx = 0;
    for (int k = 0; k <= d; ++k) idx = idx * sizes[k] + mi[k];
    return idx;
  };
  grid.nodes_.resize(total);
  std::vector<std::size_t> mi(d + 1, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (int k = d; k >= 0; --k) {
      mi[k] = rem % sizes[k];
      rem /= sizes[k];
    }
    MomentGrid::Node& node = grid.nodes_[idx];
    Vec coords(d + 1);
    for (int k = 0; k <= d; ++k) coords[k] = grid.axes_[k][mi[k]];
    node.x = PriceIncome::from_flat(coords);
    const Vec& vals = flat_values[idx];
    node.m.assign(vals.begin(), vals.begin() + d);
    node.M = Mat(d, d);
    std::size_t pos = d;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        node.M(i, j) = node.M(j, i) = vals[pos];
        ++pos;
      }
    if (has_bounds) node.bounds = ElasticityBounds(vals[pos], vals[pos + 1]);

    node.dpm = Mat(d, d);
    for (int k = 0; k < d; ++k) {  // differentiate along price axis k
      const std::size_t nk = sizes[k];
      std::size_t c = mi[k];
      std::size_t base = (c == 0) ? 0 : (c == nk - 1 ? nk - 3 : c - 1);
      if (c == 0 || c == nk - 1) node.edge = true;
      double t[3];
      const Vec* f[3];
      auto mj = mi;
      for (int s = 0; s < 3; ++s) {
        mj[k] = base + s;
        t[s] = grid.axes_[k][base + s];
        f[s] = &flat_values[flat_of(mj)];
      }
      for (int comp = 0; comp < d; ++comp) {
        const double fv[3] = {(*f[0])[comp], (*f[1])[comp], (*f[2])[comp]};
        node.dpm(comp, k) = quad_fit_derivative(t, fv, grid.axes_[k][c]);
      }
    }
  }
  return grid;
}

MomentGrid moments_ingest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("moments_ingest: cannot open '" + path + "'");
  return moments_ingest(in);
}

// ------------------------------- lattices -----------------------------------

std::vector<PriceIncome> lattice_nodes(const DemandFamily& family,
                                       const LatticeSpec& lattice) {
  const int d = family.dim();
  if (static_cast<int>(lattice.counts.size()) != d + 1)
    throw config_error("lattice: counts must have d+1 entries");
  for (int c : lattice.counts)
    if (c < 1) throw config_error("lattice: counts must be positive");

  const BoxDomain& fam_box = family.price_income_box();
  Vec lo = fam_box.lower, hi = fam_box.upper;
  if (lattice.box) {
    for (int k = 0; k <= d; ++k) {
      lo[k] = std::max(lo[k], lattice.box->lower[k]);
      hi[k] = std::min(hi[k], lattice.box->upper[k]);
      if (lo[k] > hi[k]) throw config_error("lattice: empty intersection with the family box");
    }
  }
  std::vector<Vec> axes(d + 1);
  for (int k = 0; k <= d; ++k) {
    const int c = lattice.counts[k];
    if (c == 1)
      axes[k] = {0.5 * (lo[k] + hi[k])};
    else
      for (int i = 0; i < c; ++i)
        axes[k].push_back(lo[k] + (hi[k] - lo[k]) * i / (c - 1));
  }
  std::vector<PriceIncome> nodes;
  std::size_t total = 1;
  for (const Vec& ax : axes) total *= ax.size();
  nodes.reserve(total);
  std::vector<std::size_t> mi(d + 1, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    Vec coords(d + 1);
    for (int k = d; k >= 0; --k) {
      coords[k] = axes[k][rem % axes[k].size()];
      rem /= axes[k].size();
    }
    nodes.push_back(PriceIncome::from_flat(coords));
  }
  return nodes;
}

namespace {

GridTestReport run_rows(std::vector<AsymmetryInterval> rows, double slack) {
  GridTestReport rep;
  rep.slack = slack;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) throw config_error("grid_test: no interval rows");
  rep.worst_margin = std::numeric_limits<double>::infinity();
  for (const AsymmetryInterval& r : rep.rows) {
    if (r.margin < rep.worst_margin) {
      rep.worst_margin = r.margin;
      rep.worst_x = r.x;
      rep.worst_i = r.i;
      rep.worst_j = r.j;
    }
  }
  rep.reject = rep.worst_margin < -slack;
  rep.verdict = rep.reject ? "reject" : "consistent";
  return rep;
}

}  // namespace

GridTestReport grid_test(const DemandFamily& family, const ElasticityBounds& bounds,
                         const LatticeSpec& lattice, double slack) {
  const int d = family.dim();
  std::vector<AsymmetryInterval> rows;
  for (const PriceIncome& x : lattice_nodes(family, lattice)) {
    const IdentifiedFunctionals fn = functionals_from_oracle(family, x);
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) rows.push_back(interval_compute(fn, bounds, i, j));
  }
  return run_rows(std::move(rows), slack);
}

GridTestReport grid_test(const MomentGrid& grid, const ElasticityBounds& bounds,
                         double slack) {
  const int d = grid.dim();
  std::vector<AsymmetryInterval> rows;
  for (std::size_t k = 0; k < grid.node_count(); ++k) {
    const MomentGrid::Node& node = grid.node(k);
    const ElasticityBounds b = node.bounds ? *node.bounds : bounds;
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        rows.push_back(interval_from_parts(node.x, node.dpm, node.M, b, i, j));
  }
  return run_rows(std::move(rows), slack);
}

// -------------------------------- writers -----------------------------------

namespace {
void write_num(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}
}  // namespace

void write_interval_csv(std::ostream& out, const GridTestReport& report, int d) {
  out << "i,j";
  for (int k = 1; k <= d; ++k) out << ",p" << k;
  out << ",y,center,halfwidth,margin,contains_zero\n";
  for (const AsymmetryInterval& r : report.rows) {
    out << (r.i + 1) << "," << (r.j + 1);
    for (int k = 0; k < d; ++k) {
      out << ",";
      write_num(out, r.x.p[k]);
    }
    out << ",";
    write_num(out, r.x.y);
    out << ",";
    write_num(out, r.center);
    out << ",";
    write_num(out, r.halfwidth);
    out << ",";
    write_num(out, r.margin);
    out << "," << (r.contains_zero ? 1 : 0) << "\n";
  }
}

void write_moments_csv(std::ostream& out, const DemandFamily& family,
                       const LatticeSpec& lattice, double inject_c12_slope) {
  const int d = family.dim();
  out << "p1";
  for (int k = 2; k <= d; ++k) out << ",p" << k;
  out << ",y";
  for (int k = 1; k <= d; ++k) out << ",m" << k;
  for (int i = 1; i <= d; ++i)
    for (int j = i; j <= d; ++j) out << ",M" << i << j;
  out << "\n";
  const double p2_low = family.price_income_box().lower[1];
  for (const PriceIncome& x : lattice_nodes(family, lattice)) {
    const Moments mo = family.moments(x);
    Vec m = mo.m;
    if (inject_c12_slope != 0.0 && d >= 2) m[0] += inject_c12_slope * (x.p[1] - p2_low);
    for (int k = 0; k < d; ++k) {
      if (k) out << ",";
      write_num(out, x.p[k]);
    }
    out << ",";
    write_num(out, x.y);
    for (int k = 0; k < d; ++k) {
      out << ",";
      write_num(out, m[k]);
    }
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        out << ",";
        write_num(out, mo.M(i, j));
      }
    out << "\n";
  }
}

}  // namespace slutsky
