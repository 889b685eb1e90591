// Named parameter with a matching gradient buffer.
#pragma once

#include <string>
#include <utility>

#include "esrm/numerics.hpp"

namespace esrm {

struct Tensor {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Tensor() = default;
  Tensor(std::string n, Eigen::Index rows, Eigen::Index cols, bool train = true)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        trainable(train) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
  double scalar() const { return value(0, 0); }  // 1x1 tensors
};

}  // namespace esrm
