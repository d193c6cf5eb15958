#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topopt/fea.hpp"
#include "topopt/filter.hpp"
#include "topopt/solver.hpp"

/// Declarative problem descriptions and the benchmark catalog.
///
/// Positions in a ProblemSpec use physical axes: x grows to the right, y grows
/// upward from the bottom edge. Fractional selectors are relative to the
/// domain width/height and are therefore resolution independent.
namespace topopt::problems {

struct NodeSelector {
  enum class Kind { node, node_box, point, box };

  Kind kind = Kind::point;
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;              ///< node, node_box (node indices)
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;  ///< point, box (fractions)

  static NodeSelector node(int i, int j);
  static NodeSelector node_box(int i0, int j0, int i1, int j1);
  static NodeSelector point(double x, double y);
  static NodeSelector box(double x0, double y0, double x1, double y1);

  bool operator==(const NodeSelector&) const = default;
};

enum class DofMask { x, y, xy };

struct Fixture {
  NodeSelector where;
  DofMask dofs = DofMask::xy;
  bool operator==(const Fixture&) const = default;
};

struct Load {
  NodeSelector where;
  double fx = 0.0;
  double fy = 0.0;
  bool operator==(const Load&) const = default;
};

/// Elements whose centers fall inside the fractional box are passive void.
struct ElementRegion {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool operator==(const ElementRegion&) const = default;
};

struct ProblemSpec {
  std::string name;
  int nx = 0;
  int ny = 0;
  double volume_fraction = 0.5;  ///< v_bar = fraction * (number of design elements)
  double v_lo = 0.1;
  double eta = 3.0;
  filter::FilterSpec filter;
  fea::Material material;
  std::vector<Fixture> fixtures;
  std::vector<Load> loads;
  std::vector<ElementRegion> passive;

  /// Throws std::invalid_argument (or std::out_of_range for selectors that
  /// leave the grid) when an invariant fails.
  void validate() const;

  /// Same problem at round(factor * nx) x round(factor * ny). Fractional
  /// selectors carry over unchanged; node selectors are rescaled.
  ProblemSpec scaled(double factor) const;

  bool operator==(const ProblemSpec&) const = default;
};

/// Node ids (storage order) picked by a selector. Throws std::out_of_range.
std::vector<std::size_t> select_nodes(const NodeSelector& sel, int nx, int ny);

/// Fixed-DOF mask and load vector (normalized to unit 2-norm).
fea::GridModel resolve(const ProblemSpec& spec);

std::vector<std::uint8_t> passive_mask(const ProblemSpec& spec);

/// Grid, filter, bounds and passive mask ready for the solver.
solver::DesignProblem make_design_problem(const ProblemSpec& spec);

/// The eight benchmark setups at full resolution, in catalog order.
std::vector<ProblemSpec> catalog();

std::optional<ProblemSpec> find_benchmark(const std::string& name);

} // namespace topopt::problems
