#pragma once

#include <Eigen/Core>

namespace kcal {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column i pairs with values(i)
};

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& a, int max_sweeps = 100);

}  // namespace kcal
