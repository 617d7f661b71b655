#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

namespace h2sketch {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace h2sketch
