#pragma once

#include <cstdint>
#include <vector>

#include "navmini/sim.hpp"

namespace navmini {

enum class SurfaceClass : uint8_t {
	kBackground = 0,
	kWall = 1,
	kObstacle = 2,
	kPedestrian = 3,
	kGoal = 4,
};
constexpr int kNumSurfaceClasses = 5;
constexpr float kFarPlane = 20.0f;

struct CameraModel {
	float horizontal_fov = 1.5707963267948966f; // 90 degrees
	int width = 64;
	int height = 64;
	float eye_height = 0.6f; // m above the floor
};

// One rendered observation: rgb in [0,1], pinhole z-depth in meters
// (background pixels at the far plane), per-pixel class labels.
struct Frame {
	int height = 0;
	int width = 0;
	std::vector<float> rgb;      // H*W*3
	std::vector<float> depth;    // H*W
	std::vector<uint8_t> labels; // H*W

	float& at_rgb(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
	float at_rgb(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * width + x) * 3 + c]; }
	float& at_depth(int y, int x) { return depth[static_cast<size_t>(y) * width + x]; }
	float at_depth(int y, int x) const { return depth[static_cast<size_t>(y) * width + x]; }
	uint8_t& at_label(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
	uint8_t at_label(int y, int x) const { return labels[static_cast<size_t>(y) * width + x]; }
};

struct RayHit {
	float dist = kFarPlane; // euclidean distance along the ray
	SurfaceClass cls = SurfaceClass::kBackground;
};

// Nearest intersection among walls, obstacle boxes, pedestrians and the goal
// marker. azimuth is the offset from the robot heading; misses report the
// far plane as background.
RayHit cast_ray(const SimState& scene, float azimuth);

// Column raycast render: one ray per pixel column across the FOV, vertical
// spans scaled by 1/depth, far-to-near compositing. Pure function of
// (scene, camera).
Frame render(const SimState& scene, const CameraModel& camera);

} // namespace navmini
