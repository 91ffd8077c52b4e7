#pragma once

#include <string>
#include <string_view>

#include "idm/estimation.hpp"
#include "idm/model.hpp"

namespace idm {

/// JSON text of a model: covariates plus, per transition, the form, theta,
/// beta and (for splines) lo, hi, order and interior knots. Doubles are
/// written in shortest round-trip form, so parsing gives the same bits back.
std::string model_to_json(const IllnessDeathModel& model, int indent = 2);
IllnessDeathModel model_from_json(std::string_view text);

/// Fitted model with parameter names, the full covariance, fit statistics,
/// convergence diagnostics and hazard ratios. The information matrices are
/// not stored.
std::string fitted_to_json(const FittedModel& fitted, int indent = 2);
FittedModel fitted_from_json(std::string_view text);

}  // namespace idm
