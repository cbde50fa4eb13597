#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trajtrack/autodiff.hpp"
#include "trajtrack/geometry.hpp"

namespace trajtrack::oracle {

/// Worst element-wise relative error between analytic and central-difference
/// gradients. Elements where both magnitudes are below `floor` are skipped.
struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<input>[<index>] analytic=.. numeric=.."
};

/// `build` must record a scalar loss from the given input Vars. Every input is
/// perturbed by +-step and the tape is rebuilt for each evaluation.
GradCheck check_gradients(std::vector<ad::Array> inputs,
                          const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>& build,
                          double step = 1e-5, double floor = 1e-6);

/// Same check over every parameter in `params`; `loss` records the scalar loss.
GradCheck check_parameter_gradients(ad::ParameterSet& params,
                                    const std::function<ad::Var(ad::Tape&)>& loss,
                                    double step = 1e-5, double floor = 1e-6);

/// BEV IoU estimated from `samples` uniform points in the joint bounding box.
double monte_carlo_bev_iou(const Box3D& a, const Box3D& b, std::size_t samples, std::uint64_t seed);

/// KL(N(mq, sq^2) || N(mp, sp^2)) by adaptive Gauss-Kronrod quadrature of q log(q/p).
double kl_quadrature_1d(double mq, double sq, double mp, double sp);

ad::Array random_array(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                       double hi = 1.0);

}  // namespace trajtrack::oracle
