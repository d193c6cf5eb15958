#include "topopt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace topopt::problems {

namespace {

int to_index(double fraction, int n) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw std::out_of_range("selector fraction " + std::to_string(fraction) +
                            " outside [0, 1]");
  return static_cast<int>(std::lround(fraction * n));
}

void check_node(int i, int j, int nx, int ny) {
  if (i < 0 || i > nx || j < 0 || j > ny)
    throw std::out_of_range("node (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside the " + std::to_string(nx + 1) + "x" +
                            std::to_string(ny + 1) + " node grid");
}

// (i, j) with j counted upward from the bottom edge -> storage id.
std::size_t node_id(int i, int j, int nx, int ny) {
  return static_cast<std::size_t>(ny - j) * static_cast<std::size_t>(nx + 1) +
         static_cast<std::size_t>(i);
}

int rescale(int index, int from, int to) {
  return static_cast<int>(std::lround(static_cast<double>(index) * to / from));
}

} // namespace

NodeSelector NodeSelector::node(int i, int j) {
  NodeSelector s;
  s.kind = Kind::node;
  s.i0 = s.i1 = i;
  s.j0 = s.j1 = j;
  return s;
}

NodeSelector NodeSelector::node_box(int i0, int j0, int i1, int j1) {
  NodeSelector s;
  s.kind = Kind::node_box;
  s.i0 = i0;
  s.j0 = j0;
  s.i1 = i1;
  s.j1 = j1;
  return s;
}

NodeSelector NodeSelector::point(double x, double y) {
  NodeSelector s;
  s.kind = Kind::point;
  s.x0 = s.x1 = x;
  s.y0 = s.y1 = y;
  return s;
}

NodeSelector NodeSelector::box(double x0, double y0, double x1, double y1) {
  NodeSelector s;
  s.kind = Kind::box;
  s.x0 = x0;
  s.y0 = y0;
  s.x1 = x1;
  s.y1 = y1;
  return s;
}

std::vector<std::size_t> select_nodes(const NodeSelector& sel, int nx, int ny) {
  int i0, j0, i1, j1;
  switch (sel.kind) {
    case NodeSelector::Kind::node:
      i0 = i1 = sel.i0;
      j0 = j1 = sel.j0;
      break;
    case NodeSelector::Kind::node_box:
      i0 = sel.i0;
      j0 = sel.j0;
      i1 = sel.i1;
      j1 = sel.j1;
      break;
    case NodeSelector::Kind::point:
      i0 = i1 = to_index(sel.x0, nx);
      j0 = j1 = to_index(sel.y0, ny);
      break;
    case NodeSelector::Kind::box:
    default:
      i0 = to_index(sel.x0, nx);
      j0 = to_index(sel.y0, ny);
      i1 = to_index(sel.x1, nx);
      j1 = to_index(sel.y1, ny);
      break;
  }
  check_node(i0, j0, nx, ny);
  check_node(i1, j1, nx, ny);
  if (i1 < i0) std::swap(i0, i1);
  if (j1 < j0) std::swap(j0, j1);
  std::vector<std::size_t> nodes;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) nodes.push_back(node_id(i, j, nx, ny));
  return nodes;
}

fea::GridModel resolve(const ProblemSpec& spec) {
  if (spec.nx < 1 || spec.ny < 1) throw std::invalid_argument("nx, ny must be >= 1");
  const std::size_t n_dofs = 2 * static_cast<std::size_t>(spec.nx + 1) * (spec.ny + 1);
  std::vector<std::uint8_t> fixed(n_dofs, 0);
  for (const auto& fx : spec.fixtures) {
    for (std::size_t node : select_nodes(fx.where, spec.nx, spec.ny)) {
      if (fx.dofs != DofMask::y) fixed[2 * node] = 1;
      if (fx.dofs != DofMask::x) fixed[2 * node + 1] = 1;
    }
  }
  Vector load(n_dofs, 0.0);
  for (const auto& ld : spec.loads) {
    for (std::size_t node : select_nodes(ld.where, spec.nx, spec.ny)) {
      load[2 * node] += ld.fx;
      load[2 * node + 1] += ld.fy;
    }
  }
  for (std::size_t i = 0; i < n_dofs; ++i)
    if (fixed[i]) load[i] = 0.0;
  const double nrm = norm2(load);
  if (!(nrm > 0.0)) throw std::invalid_argument("load vector vanishes on the free DOFs");
  for (double& f : load) f /= nrm;
  return fea::GridModel(spec.nx, spec.ny, spec.material, std::move(fixed), std::move(load));
}

std::vector<std::uint8_t> passive_mask(const ProblemSpec& spec) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(spec.nx) * spec.ny, 0);
  for (const auto& r : spec.passive) {
    for (int row = 0; row < spec.ny; ++row) {
      const double cy = (spec.ny - row - 0.5) / spec.ny;
      if (cy < r.y0 || cy > r.y1) continue;
      for (int col = 0; col < spec.nx; ++col) {
        const double cx = (col + 0.5) / spec.nx;
        if (cx >= r.x0 && cx <= r.x1) mask[static_cast<std::size_t>(row) * spec.nx + col] = 1;
      }
    }
  }
  return mask;
}

void ProblemSpec::validate() const {
  if (nx < 1 || ny < 1) throw std::invalid_argument("nx and ny must be >= 1");
  if (!(v_lo > 0.0 && v_lo < 1.0)) throw std::invalid_argument("v_lo must lie in (0, 1)");
  if (!(volume_fraction > v_lo && volume_fraction <= 1.0))
    throw std::invalid_argument("volume_fraction must lie in (v_lo, 1]");
  if (!(eta >= 1.0)) throw std::invalid_argument("eta must be >= 1");
  filter.validate();
  material.validate();
  if (loads.empty()) throw std::invalid_argument("at least one load is required");
  for (const auto& r : passive)
    if (!(r.x0 <= r.x1 && r.y0 <= r.y1)) throw std::invalid_argument("passive region is empty");
  const auto grid = resolve(*this);
  if (grid.num_fixed() < 3)
    throw std::invalid_argument("fixtures resolve to fewer than 3 fixed DOFs");
  const auto mask = passive_mask(*this);
  if (std::count(mask.begin(), mask.end(), 0) == 0)
    throw std::invalid_argument("every element is passive");
}

ProblemSpec ProblemSpec::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be > 0");
  ProblemSpec out = *this;
  out.nx = std::max(1, static_cast<int>(std::lround(nx * factor)));
  out.ny = std::max(1, static_cast<int>(std::lround(ny * factor)));
  auto fix = [&](NodeSelector& s) {
    if (s.kind == NodeSelector::Kind::node || s.kind == NodeSelector::Kind::node_box) {
      s.i0 = rescale(s.i0, nx, out.nx);
      s.i1 = rescale(s.i1, nx, out.nx);
      s.j0 = rescale(s.j0, ny, out.ny);
      s.j1 = rescale(s.j1, ny, out.ny);
    }
  };
  for (auto& f : out.fixtures) fix(f.where);
  for (auto& l : out.loads) fix(l.where);
  return out;
}

solver::DesignProblem make_design_problem(const ProblemSpec& spec) {
  spec.validate();
  auto mask = passive_mask(spec);
  const auto n_design = static_cast<double>(std::count(mask.begin(), mask.end(), 0));
  return solver::DesignProblem{resolve(spec), spec.filter, spec.eta, spec.v_lo,
                               spec.volume_fraction * n_design, std::move(mask)};
}

std::vector<ProblemSpec> catalog() {
  using S = NodeSelector;
  auto make = [](std::string name, int rows, int cols, double frac) {
    ProblemSpec p;
    p.name = std::move(name);
    p.nx = cols;
    p.ny = rows;
    p.volume_fraction = frac;
    return p;
  };
  const Load down_point_mid_right{S::point(1.0, 0.5), 0.0, -1.0};
  std::vector<ProblemSpec> out;

  // Bracket: two mounting strips on the left edge, load at the bottom-right corner.
  {
    auto p = make("teaser", 128, 256, 0.4);
    p.fixtures = {{S::box(0.0, 0.75, 0.0, 1.0), DofMask::xy},
                  {S::box(0.0, 0.0, 0.0, 0.25), DofMask::xy}};
    p.loads = {{S::point(1.0, 0.0), 0.0, -1.0}};
    out.push_back(p);
  }
  // Bridge with the deck at mid height, pinned at both bottom corners.
  {
    auto p = make("bridge_c", 192, 576, 0.3);
    p.fixtures = {{S::point(0.0, 0.0), DofMask::xy}, {S::point(1.0, 0.0), DofMask::xy}};
    p.loads = {{S::box(0.0, 0.5, 1.0, 0.5), 0.0, -1.0}};
    out.push_back(p);
  }
  // Two-span bridge: supports at both bottom corners and the bottom middle, top deck.
  {
    auto p = make("bridge_d", 192, 576, 0.3);
    p.fixtures = {{S::point(0.0, 0.0), DofMask::xy},
                  {S::point(0.5, 0.0), DofMask::xy},
                  {S::point(1.0, 0.0), DofMask::xy}};
    p.loads = {{S::box(0.0, 1.0, 1.0, 1.0), 0.0, -1.0}};
    out.push_back(p);
  }
  // Arch bridge: deck along the bottom edge between the corner supports.
  {
    auto p = make("bridge_b", 192, 384, 0.3);
    p.fixtures = {{S::point(0.0, 0.0), DofMask::xy}, {S::point(1.0, 0.0), DofMask::xy}};
    p.loads = {{S::box(0.0, 0.0, 1.0, 0.0), 0.0, -1.0}};
    out.push_back(p);
  }
  // Michell arch: pin + roller at the bottom corners, load at the bottom middle.
  {
    auto p = make("michell", 160, 240, 0.4);
    p.fixtures = {{S::point(0.0, 0.0), DofMask::xy}, {S::point(1.0, 0.0), DofMask::y}};
    p.loads = {{S::point(0.5, 0.0), 0.0, -1.0}};
    out.push_back(p);
  }
  // L-bracket: top-right block is void, top of the vertical arm clamped,
  // load at the outer corner of the horizontal arm.
  //
  //   ########.......
  //   |      |      .     # clamped, . passive void
  //   |      +------o     o load (downward)
  //   |             |
  //   +-------------+
  {
    auto p = make("lshape", 160, 160, 0.5);
    p.passive = {{0.4, 0.4, 1.0, 1.0}};
    p.fixtures = {{S::box(0.0, 1.0, 0.4, 1.0), DofMask::xy}};
    p.loads = {{S::point(1.0, 0.4), 0.0, -1.0}};
    out.push_back(p);
  }
  // Bridge with a top deck, pinned at both bottom corners.
  {
    auto p = make("bridge_a", 128, 384, 0.5);
    p.fixtures = {{S::point(0.0, 0.0), DofMask::xy}, {S::point(1.0, 0.0), DofMask::xy}};
    p.loads = {{S::box(0.0, 1.0, 1.0, 1.0), 0.0, -1.0}};
    out.push_back(p);
  }
  // Cantilever: left edge clamped, tip load at the middle of the right edge.
  {
    auto p = make("cantilever", 128, 256, 0.3);
    p.fixtures = {{S::box(0.0, 0.0, 0.0, 1.0), DofMask::xy}};
    p.loads = {down_point_mid_right};
    out.push_back(p);
  }
  return out;
}

std::optional<ProblemSpec> find_benchmark(const std::string& name) {
  for (auto& p : catalog())
    if (p.name == name) return p;
  return std::nullopt;
}

} // namespace topopt::problems
