#include "alttrack/geometry.hpp"

#include <cmath>
#include <numbers>

#include "alttrack/tensor.hpp"

namespace alttrack {

BoxState::BoxState(Vec3 center, Vec3 size, double yaw, Vec2 velocity)
    : center_(center), size_(size), yaw_(wrap_angle(yaw)), velocity_(velocity) {
  for (double s : size_) {
    if (!(s > 0)) throw ContractError("box: size components must be positive");
  }
  for (double v : center_) {
    if (!std::isfinite(v)) throw NonFiniteError("box: non-finite center");
  }
  if (!std::isfinite(yaw) || !std::isfinite(velocity_[0]) || !std::isfinite(velocity_[1])) {
    throw NonFiniteError("box: non-finite yaw or velocity");
  }
}

BoxState BoxState::from_vector(std::span<const double> p) {
  if (p.size() != kBoxParams) throw ContractError("box: expected 9 parameters");
  return BoxState({p[0], p[1], p[2]}, {p[3], p[4], p[5]}, p[6], {p[7], p[8]});
}

std::array<double, kBoxParams> BoxState::to_vector() const {
  return {center_[0], center_[1], center_[2], size_[0], size_[1], size_[2], yaw_, velocity_[0], velocity_[1]};
}

Vec3 EgoPose::to_world(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * p[0] - s * p[1] + translation[0], s * p[0] + c * p[1] + translation[1], p[2] + translation[2]};
}

Vec3 EgoPose::from_world(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p[0] - translation[0], dy = p[1] - translation[1];
  return {c * dx + s * dy, -s * dx + c * dy, p[2] - translation[2]};
}

std::array<double, kBoxParams> box_abs_diff(const BoxState& track_box, const BoxState& det_box) {
  const auto a = track_box.to_vector();
  const auto b = det_box.to_vector();
  std::array<double, kBoxParams> d{};
  for (std::size_t k = 0; k < kBoxParams; ++k) {
    d[k] = std::abs(a[k] - b[k]);
    if (k == kYawIndex) {
      d[k] = std::fmod(d[k], 2.0 * std::numbers::pi);
      if (d[k] > std::numbers::pi) d[k] = 2.0 * std::numbers::pi - d[k];
    }
  }
  return d;
}

Vec3 propagate_reference(const Vec3& center, const Vec2& velocity, double dt) {
  if (dt < 0) throw ContractError("propagate_reference: negative time step");
  return {center[0] + velocity[0] * dt, center[1] + velocity[1] * dt, center[2]};
}

Vec3 RigidTransform::apply(const Vec3& p) const {
  const auto& r = rotation;
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + translation[0],
          r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + translation[1],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + translation[2]};
}

RigidTransform ego_transform(const EgoPose& from, const EgoPose& to) {
  // p_to = R(-yaw_to) (R(yaw_from) p + t_from - t_to)
  const double dyaw = from.yaw - to.yaw;
  const double c = std::cos(dyaw), s = std::sin(dyaw);
  const double ct = std::cos(to.yaw), st = std::sin(to.yaw);
  const double dx = from.translation[0] - to.translation[0];
  const double dy = from.translation[1] - to.translation[1];
  RigidTransform t;
  t.rotation = {c, -s, 0, s, c, 0, 0, 0, 1};
  t.translation = {ct * dx + st * dy, -st * dx + ct * dy, from.translation[2] - to.translation[2]};
  t.yaw_offset = dyaw;
  return t;
}

std::vector<Vec3> ego_compensate(std::span<const Vec3> points, const EgoPose& pose_t, const EgoPose& pose_next) {
  const auto t = ego_transform(pose_t, pose_next);
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t.apply(p));
  return out;
}

BoxState transform_box(const BoxState& box, const EgoPose& from, const EgoPose& to) {
  const auto t = ego_transform(from, to);
  const auto& v = box.velocity();
  const Vec2 vel{t.rotation[0] * v[0] + t.rotation[1] * v[1], t.rotation[3] * v[0] + t.rotation[4] * v[1]};
  return BoxState(t.apply(box.center()), box.size(), box.yaw() + t.yaw_offset, vel);
}

BoxState box_to_world(const BoxState& box, const EgoPose& pose) { return transform_box(box, pose, EgoPose{}); }

BoxState box_from_world(const BoxState& box, const EgoPose& pose) { return transform_box(box, EgoPose{}, pose); }

double center_distance(const BoxState& a, const BoxState& b) {
  const auto& p = a.center();
  const auto& q = b.center();
  return std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]));
}

}  // namespace alttrack
