#pragma once

// Action maps over the (position, velocity) grid and target-evolution heat
// maps, written as CSV plus a dependency-free SVG.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sfbc/app/pipeline.hpp"

namespace sfbc::app {

struct Grid {
  int nx = 21;
  int nv = 11;
  double x_lo = -0.95, x_hi = 0.95;
  double v_lo = -0.05, v_hi = 0.05;

  void validate() const {
    require(nx >= 1 && nv >= 1, ErrorKind::InvalidArgument, "grid must have at least one cell");
    require(x_lo <= x_hi && v_lo <= v_hi, ErrorKind::InvalidArgument, "grid bounds are reversed");
  }
  double x(int i) const { return nx == 1 ? 0.5 * (x_lo + x_hi) : x_lo + (x_hi - x_lo) * i / (nx - 1); }
  double v(int j) const { return nv == 1 ? 0.5 * (v_lo + v_hi) : v_lo + (v_hi - v_lo) * j / (nv - 1); }
};

struct ActionMap {
  Grid grid;
  Matrix actions;  // nv x nx

  double fraction_above(double threshold) const {
    return (actions.array().abs() > threshold).cast<double>().mean();
  }
};

/// Evaluation-mode action at every grid cell.
inline ActionMap compute_action_map(const fs::path& run_dir, const Grid& grid,
                                    const EvalOptions& opt) {
  grid.validate();
  const LoadedBehavior behavior = load_behavior(run_dir);
  const critic::Critic q = load_critic(run_dir / "critic");
  Matrix states(2, grid.nx * grid.nv);
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      states(0, j * grid.nx + i) = grid.x(i);
      states(1, j * grid.nx + i) = grid.v(j);
    }
  Rng rng(opt.seed);
  const Matrix acts = with_sampler(behavior, opt.sampler, [&](const auto& sampler) {
    return policy::select_actions_eval_batch(states, sampler, q, opt.policy, rng);
  });
  ActionMap map{grid, Matrix(grid.nv, grid.nx)};
  for (int j = 0; j < grid.nv; ++j)
    for (int i = 0; i < grid.nx; ++i) map.actions(j, i) = acts(0, j * grid.nx + i);
  return map;
}

namespace detail {

// Diverging blue-white-red for values in [-1, 1].
inline std::string diverging(double t) {
  t = std::clamp(t, -1.0, 1.0);
  int r, g, b;
  if (t < 0) {
    r = g = static_cast<int>(255 * (1 + t));
    b = 255;
  } else {
    r = 255;
    g = b = static_cast<int>(255 * (1 - t));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

// Sequential white-to-dark for values in [0, 1].
inline std::string sequential(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(255 - 205 * t), g = static_cast<int>(255 - 155 * t),
            b = static_cast<int>(255 - 55 * t);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

inline void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << body;
}

}  // namespace detail

inline void write_action_map_csv(const ActionMap& m, const fs::path& path) {
  std::ostringstream os;
  os << std::setprecision(17) << "x,v,action\n";
  for (int j = 0; j < m.grid.nv; ++j)
    for (int i = 0; i < m.grid.nx; ++i)
      os << m.grid.x(i) << ',' << m.grid.v(j) << ',' << m.actions(j, i) << '\n';
  detail::write_file(path, os.str());
}

inline ActionMap read_action_map_csv(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "x,v,action", ErrorKind::Parse, path.string() + ": bad header");
  std::map<double, std::map<double, double>> cells;  // v -> x -> a
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double x, v, a;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> x >> c1 >> v >> c2 >> a) || c1 != ',' || c2 != ',')
      throw ParseError(lineno, "expected x,v,action");
    cells[v][x] = a;
  }
  require(!cells.empty(), ErrorKind::InvalidArgument, path.string() + ": empty grid");
  ActionMap m;
  m.grid.nv = static_cast<int>(cells.size());
  m.grid.nx = static_cast<int>(cells.begin()->second.size());
  m.grid.v_lo = cells.begin()->first;
  m.grid.v_hi = cells.rbegin()->first;
  m.grid.x_lo = cells.begin()->second.begin()->first;
  m.grid.x_hi = cells.begin()->second.rbegin()->first;
  m.actions.resize(m.grid.nv, m.grid.nx);
  int j = 0;
  for (const auto& [v, row] : cells) {
    require(static_cast<int>(row.size()) == m.grid.nx, ErrorKind::Parse,
            path.string() + ": ragged grid");
    int i = 0;
    for (const auto& [x, a] : row) m.actions(j, i++) = a;
    ++j;
  }
  return m;
}

inline std::string action_map_svg(const ActionMap& m, const std::string& title) {
  const int cell = 20, left = 60, top = 40;
  const int w = left + cell * m.grid.nx + 20, h = top + cell * m.grid.nv + 50;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << title << "</text>\n";
  for (int j = 0; j < m.grid.nv; ++j)
    for (int i = 0; i < m.grid.nx; ++i) {
      const int row = m.grid.nv - 1 - j;  // velocity increases upward
      os << "<rect x=\"" << left + i * cell << "\" y=\"" << top + row * cell << "\" width=\""
         << cell << "\" height=\"" << cell << "\" fill=\"" << detail::diverging(m.actions(j, i))
         << "\"><title>x=" << m.grid.x(i) << " v=" << m.grid.v(j) << " a=" << m.actions(j, i)
         << "</title></rect>\n";
    }
  const int bottom = top + cell * m.grid.nv;
  os << "<text x=\"" << left << "\" y=\"" << bottom + 15 << "\">x=" << m.grid.x_lo << "</text>\n";
  os << "<text x=\"" << left + cell * m.grid.nx << "\" y=\"" << bottom + 15
     << "\" text-anchor=\"end\">x=" << m.grid.x_hi << "</text>\n";
  os << "<text x=\"" << left - 5 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">v=" << m.grid.v_hi
     << "</text>\n";
  os << "<text x=\"" << left - 5 << "\" y=\"" << bottom << "\" text-anchor=\"end\">v=" << m.grid.v_lo
     << "</text>\n";
  os << "<text x=\"" << left << "\" y=\"" << bottom + 35
     << "\">blue: a=-1, white: a=0, red: a=+1</text>\n</svg>\n";
  return os.str();
}

struct TargetHistory {
  std::vector<std::vector<double>> by_iteration;  // [k][record]
};

inline TargetHistory read_targets_csv(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "iteration,record,target", ErrorKind::Parse, path.string() + ": bad header");
  TargetHistory h;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    long k, n;
    double v;
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> k >> c1 >> n >> c2 >> v) || c1 != ',' || c2 != ',' || k < 0 || n < 0)
      throw ParseError(lineno, "expected iteration,record,target");
    if (static_cast<std::size_t>(k) >= h.by_iteration.size()) h.by_iteration.resize(k + 1);
    auto& row = h.by_iteration[static_cast<std::size_t>(k)];
    if (static_cast<std::size_t>(n) >= row.size()) row.resize(n + 1, 0.0);
    row[static_cast<std::size_t>(n)] = v;
  }
  require(!h.by_iteration.empty(), ErrorKind::InvalidArgument, path.string() + ": no targets");
  return h;
}

/// Heat map with one row per iteration over the first `max_records` records.
inline std::string target_evolution_svg(const TargetHistory& h, std::size_t max_records = 240) {
  std::size_t n = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& row : h.by_iteration) n = std::max(n, row.size());
  n = std::min(n, max_records);
  for (const auto& row : h.by_iteration)
    for (std::size_t i = 0; i < std::min(n, row.size()); ++i) {
      lo = std::min(lo, row[i]);
      hi = std::max(hi, row[i]);
    }
  const double span = hi > lo ? hi - lo : 1.0;
  const int cw = 3, ch = 30, left = 50, top = 40;
  const int w = left + cw * static_cast<int>(n) + 20;
  const int height = top + ch * static_cast<int>(h.by_iteration.size()) + 40;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">Q targets per iteration (first " << n
     << " records)</text>\n";
  for (std::size_t k = 0; k < h.by_iteration.size(); ++k) {
    const auto& row = h.by_iteration[k];
    os << "<text x=\"" << left - 5 << "\" y=\"" << top + ch * k + ch / 2 + 4
       << "\" text-anchor=\"end\">k=" << k << "</text>\n";
    for (std::size_t i = 0; i < std::min(n, row.size()); ++i)
      os << "<rect x=\"" << left + cw * i << "\" y=\"" << top + ch * k << "\" width=\"" << cw
         << "\" height=\"" << ch << "\" fill=\"" << detail::sequential((row[i] - lo) / span)
         << "\"/>\n";
  }
  os << "<text x=\"" << left << "\" y=\"" << top + ch * h.by_iteration.size() + 20
     << "\">light: " << lo << ", dark: " << hi << "</text>\n</svg>\n";
  return os.str();
}

}  // namespace sfbc::app
