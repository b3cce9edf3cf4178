#pragma once

#include <Eigen/Dense>

namespace ubsgd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace ubsgd
