#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idm/probabilities.hpp"

namespace idm {

/// Long-format curve CSV: one row per (curve, age) with columns
/// stratum, profile, quantity, conditioning_age, age, estimate, lo95, hi95,
/// extrapolated.
void write_curves_csv(std::ostream& out, std::span<const CurveTable> curves);
/// Groups rows back into curves in order of first appearance. Only the
/// columns above are restored.
std::vector<CurveTable> parse_curves_csv(std::string_view text);
std::vector<CurveTable> read_curves_csv(const std::string& path);

/// Wide age-by-horizon table: stratum, profile, age, then for each horizon
/// "<h>", "<h>_lo95", "<h>_hi95". Blank cells stay empty.
void write_conditional_csv(std::ostream& out, std::span<const ConditionalTable> tables);

struct PlotOptions {
  int width = 720;
  int height = 440;
  std::string title;
  /// Lower and upper y limits; the upper one is fitted to the data when <= 0.
  double y_max = 0.0;
};

/// SVG with one estimate line and one shaded 95% band per curve; all numbers
/// are printed with fixed precision so equal inputs give equal bytes.
std::string render_svg(std::span<const CurveTable> curves, const PlotOptions& options = {});

}  // namespace idm
