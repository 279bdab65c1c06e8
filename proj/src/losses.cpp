#include "headsynth/losses.hpp"

#include <cmath>
#include <cstdio>

namespace headsynth {

void LossWeights::validate() const {
  for (double w : {re, f, tri, depth, opa, id, adv}) require(w >= 0.0, "LossWeights: weights must be non-negative");
}

double l1(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "l1: size mismatch (" + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double l1(const Image& a, const Image& b) {
  require(a.same_shape(b), "l1: image shape mismatch");
  const auto da = a.data(), db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) sum += std::abs(static_cast<double>(da[i]) - db[i]);
  return sum / static_cast<double>(da.size());
}

double masked_l1(const Image& a, const Image& b, const Image& mask) {
  require(a.same_shape(b), "masked_l1: image shape mismatch");
  require(mask.width() == a.width() && mask.height() == a.height() && mask.channels() == 1,
          "masked_l1: mask must be a single-channel map of the image size");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (mask.data()[p] <= 0.5f) continue;
    const auto pa = a.pixel(p), pb = b.pixel(p);
    for (std::size_t c = 0; c < pa.size(); ++c) sum += std::abs(static_cast<double>(pa[c]) - pb[c]);
    count += pa.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double loss_tri(const Eigen::MatrixXd& features, const Eigen::MatrixXd& recorded) {
  require(features.rows() == recorded.rows() && features.cols() == recorded.cols(),
          "loss_tri: feature matrices differ in shape");
  if (features.size() == 0) return 0.0;
  return (features - recorded).cwiseAbs().sum() / static_cast<double>(features.size());
}

double loss_part(std::span<const double> sigma, std::span<const Eigen::Vector2d> pixels, const Image& mask) {
  require(sigma.size() == pixels.size(), "loss_part: sigma and pixel lists differ in length");
  require(mask.channels() == 1, "loss_part: mask must have one channel");
  double sum = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    const double px = std::floor(pixels[i].x()), py = std::floor(pixels[i].y());
    if (!(px >= 0.0 && py >= 0.0 && px < mask.width() && py < mask.height())) continue;
    if (mask.at(static_cast<int>(px), static_cast<int>(py)) > 0.5f) sum += sigma[i];
  }
  return sum;
}

std::string LossReport::to_string() const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "re=%.17g f=%.17g tri=%.17g depth=%.17g opa=%.17g id=%.17g adv=%.17g total=%.17g", re,
                f, tri, depth, opa, id, adv, total);
  return buf;
}

LossReport total_loss(const LossTerms& terms, const LossWeights& w, const LossHooks& hooks) {
  w.validate();
  auto hook = [](const std::function<double()>& h) { return h ? h() : 0.0; };
  LossReport r;
  r.re = terms.re + hook(hooks.perceptual);
  r.f = terms.f;
  r.tri = terms.tri;
  r.depth = terms.depth;
  r.opa = terms.opa;
  r.id = hook(hooks.identity);
  r.adv = hook(hooks.adversarial);
  r.total = w.re * r.re + w.f * r.f + w.tri * r.tri + w.depth * r.depth + w.opa * r.opa + w.id * r.id + w.adv * r.adv;
  return r;
}

}  // namespace headsynth
