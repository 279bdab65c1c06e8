#pragma once

#include <Eigen/Core>

#include <functional>
#include <span>
#include <string>

#include "headsynth/image.hpp"

namespace headsynth {

struct LossWeights {
  double re = 1.0;
  double f = 1.0;
  double tri = 0.1;
  double depth = 1.0;
  double opa = 0.3;
  double id = 1.0;
  double adv = 0.01;

  // Throws ContractViolation on a negative weight.
  void validate() const;
};

// Mean absolute difference.
double l1(std::span<const double> a, std::span<const double> b);
double l1(const Image& a, const Image& b);

// Mean absolute difference over the pixels where mask > 0.5, all channels;
// 0 when the mask is empty.
double masked_l1(const Image& a, const Image& b, const Image& mask);

// Points x channels feature matrices.
double loss_tri(const Eigen::MatrixXd& features, const Eigen::MatrixXd& recorded);

// Sum of sigma over samples whose continuous pixel coordinate falls on a mask
// pixel (floor of the coordinate, inside the image, mask > 0.5).
double loss_part(std::span<const double> sigma, std::span<const Eigen::Vector2d> pixels, const Image& mask);

// Hooks stand in for terms that need pretrained networks; an empty hook
// contributes 0.
struct LossHooks {
  std::function<double()> perceptual;  // added to the reconstruction term
  std::function<double()> identity;
  std::function<double()> adversarial;
};

struct LossTerms {
  double re = 0.0;     // L1 of the reconstruction
  double f = 0.0;      // feature-map L1 (foreground and background)
  double tri = 0.0;
  double depth = 0.0;
  double opa = 0.0;
};

struct LossReport {
  double re = 0.0;  // L1 part plus the perceptual hook
  double f = 0.0;
  double tri = 0.0;
  double depth = 0.0;
  double opa = 0.0;
  double id = 0.0;
  double adv = 0.0;
  double total = 0.0;

  // "re=... f=... tri=... depth=... opa=... id=... adv=... total=..."
  std::string to_string() const;
};

LossReport total_loss(const LossTerms& terms, const LossWeights& weights = {}, const LossHooks& hooks = {});

}  // namespace headsynth
