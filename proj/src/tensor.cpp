#include "amm/tensor.hpp"

#include <sstream>

#include "amm/errors.hpp"

namespace amm {

torch::Tensor one_hot(const torch::Tensor& indices, int64_t classes) {
  return torch::one_hot(indices.to(torch::kLong), classes).to(kReal);
}

void require_shape(const torch::Tensor& t, int64_t rows, int64_t cols, const std::string& what) {
  const bool ok = t.defined() && t.dim() == 2 && (rows < 0 || t.size(0) == rows) &&
                  (cols < 0 || t.size(1) == cols);
  if (!ok) {
    std::ostringstream msg;
    msg << what << ": expected a " << (rows < 0 ? std::string("M") : std::to_string(rows)) << "x"
        << (cols < 0 ? std::string("N") : std::to_string(cols)) << " matrix, got ";
    if (t.defined()) {
      msg << t.sizes();
    } else {
      msg << "an undefined tensor";
    }
    throw DimensionError(msg.str());
  }
}

void require_finite(const torch::Tensor& t, const std::string& what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw NumericError(what + " is not finite");
  }
}

}  // namespace amm
