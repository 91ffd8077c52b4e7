#pragma once

#include <span>
#include <vector>

namespace idm {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes and weights of the n-point Gauss-Legendre rule, computed by Newton
/// iteration on the Legendre polynomial. Rules are cached per n.
const GaussLegendreRule& gauss_legendre(int n);

/// Nodes and weights mapped onto [a, b], appended to the output vectors.
void append_mapped_rule(const GaussLegendreRule& rule, double a, double b,
                        std::vector<double>& nodes, std::vector<double>& weights);

/// Composite rule over the sorted breakpoints, one `n`-point panel per
/// consecutive pair with positive width.
void composite_rule(std::span<const double> breakpoints, int n,
                    std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace idm
