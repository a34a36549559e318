#pragma once

#include <Eigen/Dense>

namespace semf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace semf
