#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace oscar {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecI = Eigen::VectorXi;

// Multi-hot label vector over the class catalog. Entry j is 1 when the
// trace contains traffic of class j, 0 otherwise.
using LabelVec = Eigen::VectorXi;

using Index = Eigen::Index;

}  // namespace oscar
