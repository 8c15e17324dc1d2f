// Synthetic place-cell population: Gaussian place fields over a 2D box, the
// top-3 centroid decoder and gradient-descent refinement of decoded positions.
#pragma once

#include "stochastic_processes.hpp"
#include "trajectory_io.hpp"

#include <algorithm>
#include <numeric>

namespace replaylab {

struct PlaceCellMap {
  Mat centers;  // cells x 2
  double width = 0.1;
  EnvironmentSpec box;

  Eigen::Index cells() const { return centers.rows(); }

  void validate() const {
    box.validate();
    require(box.kind == EnvKind::box && box.box->lo.size() == 2,
            ErrorKind::parameter, "place cells need a 2D box");
    require(width > 0.0, ErrorKind::parameter, "place field width must be > 0");
    require(centers.cols() == 2 && centers.rows() >= 3, ErrorKind::shape,
            "need at least 3 place cells with 2D centers");
    for (Eigen::Index i = 0; i < centers.rows(); ++i)
      require((centers.row(i).transpose().array() >= box.box->lo.array()).all() &&
                  (centers.row(i).transpose().array() <= box.box->hi.array()).all(),
              ErrorKind::parameter, "place cell center outside the box");
  }
};

/// Centers uniform in the box; width defaults to a tenth of the shorter side.
inline PlaceCellMap make_place_cell_map(const EnvironmentSpec& box, int cells,
                                        std::uint64_t seed,
                                        std::optional<double> width = std::nullopt) {
  box.validate();
  require(box.kind == EnvKind::box && box.box->lo.size() == 2,
          ErrorKind::parameter, "place cells need a 2D box");
  const Vec side = box.box->hi - box.box->lo;
  Rng rng = make_rng(seed, 51);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  PlaceCellMap map;
  map.centers.resize(cells, 2);
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < 2; ++j)
      map.centers(i, j) = box.box->lo[j] + side[j] * uniform(rng);
  map.width = width.value_or(0.1 * side.minCoeff());
  map.box = box;
  map.validate();
  return map;
}

/// activity_i(t) = exp(-||pos(t) - center_i||^2 / (2 width^2)).
inline Mat encode(const PlaceCellMap& map, const Mat& positions) {
  require(positions.cols() == 2, ErrorKind::shape, "positions must be T x 2");
  require(positions.allFinite(), ErrorKind::parameter, "positions must be finite");
  const double inv = 1.0 / (2.0 * map.width * map.width);
  Mat out(positions.rows(), map.cells());
  for (Eigen::Index t = 0; t < positions.rows(); ++t)
    for (Eigen::Index i = 0; i < map.cells(); ++i)
      out(t, i) = std::exp(-(positions.row(t) - map.centers.row(i)).squaredNorm() * inv);
  return out;
}

inline Vec encode_point(const PlaceCellMap& map, const Vec& position) {
  return encode(map, position.transpose()).row(0).transpose();
}

/// Mean of the three most active cells' centers (ties: lower index first).
inline Vec decode_init(const PlaceCellMap& map, const Vec& activity) {
  require(activity.size() == map.cells(), ErrorKind::shape,
          "activity does not match cell count");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(map.cells()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                    [&activity](Eigen::Index a, Eigen::Index b) {
                      if (activity[a] != activity[b]) return activity[a] > activity[b];
                      return a < b;
                    });
  Vec out = Vec::Zero(2);
  for (int i = 0; i < 3; ++i) out += map.centers.row(order[static_cast<std::size_t>(i)]).transpose();
  return out / 3.0;
}

namespace detail {

inline Vec clamp_to_box(const Vec& p, const Box& box) {
  return p.cwiseMax(box.lo).cwiseMin(box.hi);
}

inline double decode_objective(const PlaceCellMap& map, const Vec& activity,
                               const Vec& p) {
  return (activity - encode_point(map, p)).squaredNorm();
}

}  // namespace detail

struct RefineOptions {
  int iterations = 1000;
  double step = 1e-2;
  int max_halvings = 40;
  double tolerance = 1e-12;  // stop once an accepted move is shorter than this
};

/// Gradient descent on ||activity - encode(p)||^2 from `init` with
/// backtracking (step halving until the objective decreases; an accepted step
/// is doubled for the next iteration). Iterates are kept inside the box.
inline Vec decode_refine(const PlaceCellMap& map, const Vec& activity,
                         const Vec& init, const RefineOptions& opts = {}) {
  require(activity.size() == map.cells(), ErrorKind::shape,
          "activity does not match cell count");
  require(init.size() == 2 && init.allFinite(), ErrorKind::parameter,
          "init must be a finite 2-vector");
  const Box& box = *map.box.box;
  const double inv_w2 = 1.0 / (map.width * map.width);
  Vec p = detail::clamp_to_box(init, box);
  double obj = detail::decode_objective(map, activity, p);
  double base_step = opts.step;
  for (int it = 0; it < opts.iterations; ++it) {
    const Vec enc = encode_point(map, p);
    Vec grad = Vec::Zero(2);
    for (Eigen::Index i = 0; i < map.cells(); ++i)
      grad -= 2.0 * (activity[i] - enc[i]) * enc[i] * inv_w2 *
              (map.centers.row(i).transpose() - p);
    if (grad.squaredNorm() == 0.0) break;
    double step = base_step;
    bool accepted = false;
    for (int h = 0; h < opts.max_halvings; ++h, step *= 0.5) {
      const Vec cand = detail::clamp_to_box(p - step * grad, box);
      const double cand_obj = detail::decode_objective(map, activity, cand);
      if (cand_obj < obj) {
        if ((cand - p).norm() < opts.tolerance) it = opts.iterations;
        p = cand;
        obj = cand_obj;
        accepted = true;
        base_step = 2.0 * step;
        break;
      }
    }
    if (!accepted) break;
  }
  return p;
}

/// Decodes every row of a T x cells activity matrix into a 2D trajectory.
inline Mat decode_positions(const PlaceCellMap& map, const Mat& activity,
                            const RefineOptions& opts = {}) {
  Mat out(activity.rows(), 2);
  for (Eigen::Index t = 0; t < activity.rows(); ++t) {
    const Vec a = activity.row(t).transpose();
    out.row(t) = decode_refine(map, a, decode_init(map, a), opts).transpose();
  }
  return out;
}

// =============================================================================
// Persistence
// =============================================================================

inline void write_place_cell_map(std::ostream& os, const PlaceCellMap& map) {
  const Box& b = *map.box.box;
  os << "# width=" << sig17(map.width) << " lo=" << sig17(b.lo[0]) << ','
     << sig17(b.lo[1]) << " hi=" << sig17(b.hi[0]) << ',' << sig17(b.hi[1]) << '\n';
  os << "cx,cy\n";
  for (Eigen::Index i = 0; i < map.cells(); ++i)
    os << sig17(map.centers(i, 0)) << ',' << sig17(map.centers(i, 1)) << '\n';
}

inline PlaceCellMap read_place_cell_map(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line.rfind("# width=", 0) == 0,
          ErrorKind::parameter, "bad place cell map header");
  double w = 0, lx = 0, ly = 0, hx = 0, hy = 0;
  {
    std::string s = line;
    for (char& ch : s)
      if (ch == '=' || ch == ',') ch = ' ';
    std::istringstream hs(s);
    std::string hash, kw, kl, kh;
    hs >> hash >> kw >> w >> kl >> lx >> ly >> kh >> hx >> hy;
    require(static_cast<bool>(hs), ErrorKind::parameter, "bad place cell map header");
  }
  require(static_cast<bool>(std::getline(is, line)) && line == "cx,cy",
          ErrorKind::parameter, "bad place cell map column header");
  std::vector<std::pair<double, double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    require(f.size() == 2, ErrorKind::parameter, "bad place cell row");
    rows.emplace_back(detail::parse_double(f[0]), detail::parse_double(f[1]));
  }
  PlaceCellMap map;
  map.width = w;
  map.box = EnvironmentSpec::box_env(Eigen::Vector2d(lx, ly), Eigen::Vector2d(hx, hy));
  map.centers.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    map.centers(static_cast<Eigen::Index>(i), 0) = rows[i].first;
    map.centers(static_cast<Eigen::Index>(i), 1) = rows[i].second;
  }
  map.validate();
  return map;
}

}  // namespace replaylab
