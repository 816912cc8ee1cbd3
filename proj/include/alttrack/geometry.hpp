#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace alttrack {

using Vec3 = std::array<double, 3>;
using Vec2 = std::array<double, 2>;

/// Number of scalar box parameters: center(3), size(3), yaw, BEV velocity(2).
inline constexpr std::size_t kBoxParams = 9;
inline constexpr std::size_t kYawIndex = 6;

/// Normalizes an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0) r += two_pi;
  r -= std::numbers::pi;
  return r == -std::numbers::pi ? std::numbers::pi : r;
}

/// 3D box with BEV velocity.
class BoxState {
 public:
  BoxState() = default;
  /// Throws ContractError unless every size component is positive.
  BoxState(Vec3 center, Vec3 size, double yaw, Vec2 velocity);

  static BoxState from_vector(std::span<const double> params);
  std::array<double, kBoxParams> to_vector() const;

  const Vec3& center() const noexcept { return center_; }
  const Vec3& size() const noexcept { return size_; }
  double yaw() const noexcept { return yaw_; }
  const Vec2& velocity() const noexcept { return velocity_; }

  friend bool operator==(const BoxState&, const BoxState&) = default;

 private:
  Vec3 center_{0, 0, 0};
  Vec3 size_{1, 1, 1};
  double yaw_ = 0;
  Vec2 velocity_{0, 0};
};

/// Planar vehicle pose in the world frame: translation plus heading about z.
struct EgoPose {
  Vec3 translation{0, 0, 0};
  double yaw = 0;

  EgoPose() = default;
  EgoPose(Vec3 t, double heading) : translation(t), yaw(wrap_angle(heading)) {}

  Vec3 to_world(const Vec3& p) const;
  Vec3 from_world(const Vec3& p) const;

  friend bool operator==(const EgoPose&, const EgoPose&) = default;
};

/// Elementwise |track - det| with the yaw difference wrapped into [0, pi].
std::array<double, kBoxParams> box_abs_diff(const BoxState& track_box, const BoxState& det_box);

/// Constant-velocity advance of x,y; z untouched. Throws ContractError for dt < 0.
Vec3 propagate_reference(const Vec3& center, const Vec2& velocity, double dt);

/// Rotation (row-major 3x3) and translation mapping points from the vehicle frame at `from`
/// into the vehicle frame at `to`.
struct RigidTransform {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation{0, 0, 0};

  Vec3 apply(const Vec3& p) const;
  double yaw_offset = 0;
};
RigidTransform ego_transform(const EgoPose& from, const EgoPose& to);

std::vector<Vec3> ego_compensate(std::span<const Vec3> points, const EgoPose& pose_t, const EgoPose& pose_next);

/// Re-expresses a box between vehicle frames: center moved, yaw offset, velocity rotated.
BoxState transform_box(const BoxState& box, const EgoPose& from, const EgoPose& to);
BoxState box_to_world(const BoxState& box, const EgoPose& pose);
BoxState box_from_world(const BoxState& box, const EgoPose& pose);

double center_distance(const BoxState& a, const BoxState& b);

}  // namespace alttrack
