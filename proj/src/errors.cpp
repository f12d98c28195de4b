#include "stacklab/errors.hpp"

#include <sstream>

namespace stacklab {

namespace {

std::string singular_message(double sigma_min, double sigma_max, const std::string& context) {
  std::ostringstream os;
  os.precision(6);
  if (!context.empty()) os << context << ": ";
  os << "matrix is numerically singular (sigma_min=" << sigma_min << ", sigma_max=" << sigma_max
     << ")";
  return os.str();
}

}  // namespace

SingularMatrix::SingularMatrix(double sigma_min, double sigma_max, std::string context)
    : NumericError(singular_message(sigma_min, sigma_max, context)),
      sigma_min_(sigma_min),
      sigma_max_(sigma_max) {}

SingularMatrix SingularMatrix::at_stage(std::size_t stage) const {
  return SingularMatrix(sigma_min_, sigma_max_, "stage " + std::to_string(stage));
}

AlphaUndefined::AlphaUndefined(double kappa)
    : std::domain_error("perturbation budget alpha requires kappa > 9 (got kappa=" +
                        std::to_string(kappa) + ")") {}

}  // namespace stacklab
