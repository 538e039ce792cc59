#include "navmini/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "navmini/error.hpp"

namespace navmini {

namespace {

struct Rgb {
	float r, g, b;
};

constexpr Rgb kFloorColor{0.30f, 0.30f, 0.33f};
constexpr Rgb kCeilingColor{0.16f, 0.17f, 0.20f};
constexpr Rgb kWallColor{0.55f, 0.55f, 0.60f};
constexpr Rgb kWallColorTextured{0.48f, 0.32f, 0.26f};
constexpr Rgb kObstacleColor{0.25f, 0.45f, 0.65f};
constexpr Rgb kPedestrianColor{0.80f, 0.35f, 0.25f};
constexpr Rgb kGoalColor{0.20f, 0.75f, 0.30f};

constexpr float kWallHeight = 2.0f;
constexpr float kObstacleHeight = 1.0f;
constexpr float kPedestrianHeight = 1.8f;
constexpr float kGoalMarkerHeight = 0.5f;

float surface_height(SurfaceClass cls) {
	switch (cls) {
		case SurfaceClass::kWall: return kWallHeight;
		case SurfaceClass::kObstacle: return kObstacleHeight;
		case SurfaceClass::kPedestrian: return kPedestrianHeight;
		case SurfaceClass::kGoal: return kGoalMarkerHeight;
		case SurfaceClass::kBackground: return 0.0f;
	}
	return 0.0f;
}

Rgb surface_color(SurfaceClass cls, Scenario scenario) {
	switch (cls) {
		case SurfaceClass::kWall: return scenario == Scenario::kTextured ? kWallColorTextured : kWallColor;
		case SurfaceClass::kObstacle: return kObstacleColor;
		case SurfaceClass::kPedestrian: return kPedestrianColor;
		case SurfaceClass::kGoal: return kGoalColor;
		case SurfaceClass::kBackground: return kFloorColor;
	}
	return kFloorColor;
}

struct ColumnHit {
	float dist;
	SurfaceClass cls;
};

void collect_hits(const SimState& scene, Vec2 origin, Vec2 dir, std::vector<ColumnHit>& hits) {
	hits.clear();
	for (const auto& wall : scene.walls) {
		const float t = ray_segment(origin, dir, wall);
		if (t >= 0.0f && t < kFarPlane) hits.push_back({t, SurfaceClass::kWall});
	}
	for (const auto& box : scene.obstacles) {
		const float t = ray_box(origin, dir, box);
		if (t >= 0.0f && t < kFarPlane) hits.push_back({t, SurfaceClass::kObstacle});
	}
	for (const auto& ped : scene.pedestrians) {
		const float t = ray_circle(origin, dir, ped.position, ped.radius);
		if (t >= 0.0f && t < kFarPlane) hits.push_back({t, SurfaceClass::kPedestrian});
	}
	{
		const float t = ray_circle(origin, dir, scene.goal, scene.config.goal_radius);
		if (t >= 0.0f && t < kFarPlane) hits.push_back({t, SurfaceClass::kGoal});
	}
}

} // namespace

RayHit cast_ray(const SimState& scene, float azimuth) {
	const float a = scene.robot_heading + azimuth;
	const Vec2 dir{std::cos(a), std::sin(a)};
	static thread_local std::vector<ColumnHit> hits;
	collect_hits(scene, scene.robot_pos, dir, hits);
	RayHit best;
	for (const auto& h : hits) {
		if (h.dist < best.dist) {
			best.dist = h.dist;
			best.cls = h.cls;
		}
	}
	return best;
}

Frame render(const SimState& scene, const CameraModel& camera) {
	if (camera.horizontal_fov <= 0.0f || camera.horizontal_fov >= 3.14159265f) {
		throw Error("render: horizontal fov must be in (0, pi)");
	}
	const int w = camera.width;
	const int h = camera.height;
	Frame frame;
	frame.width = w;
	frame.height = h;
	frame.rgb.resize(static_cast<size_t>(h) * w * 3);
	frame.depth.assign(static_cast<size_t>(h) * w, kFarPlane);
	frame.labels.assign(static_cast<size_t>(h) * w, static_cast<uint8_t>(SurfaceClass::kBackground));

	// floor below the horizon, ceiling above
	for (int y = 0; y < h; ++y) {
		const Rgb base = y < h / 2 ? kCeilingColor : kFloorColor;
		for (int x = 0; x < w; ++x) {
			frame.at_rgb(y, x, 0) = base.r;
			frame.at_rgb(y, x, 1) = base.g;
			frame.at_rgb(y, x, 2) = base.b;
		}
	}

	// equal-angle columns across the fov; vertical scale from the pinhole
	// focal length so span heights go as 1/depth
	const float pitch = camera.horizontal_fov / static_cast<float>(w);
	const float focal = (static_cast<float>(w) * 0.5f) / std::tan(camera.horizontal_fov * 0.5f);
	const float cy = static_cast<float>(h) * 0.5f;

	std::vector<ColumnHit> hits;
	for (int x = 0; x < w; ++x) {
		const float azimuth = (static_cast<float>(x) + 0.5f - static_cast<float>(w) * 0.5f) * pitch;
		const float world = scene.robot_heading - azimuth; // +x pixel looks right
		const Vec2 dir{std::cos(world), std::sin(world)};
		collect_hits(scene, scene.robot_pos, dir, hits);
		std::sort(hits.begin(), hits.end(), [](const ColumnHit& a, const ColumnHit& b) { return a.dist > b.dist; });
		const float cos_az = std::cos(azimuth);
		for (const auto& hit : hits) {
			const float z = hit.dist * cos_az;
			if (z <= 1e-4f) continue;
			const float top = cy - focal * (surface_height(hit.cls) - camera.eye_height) / z;
			const float bottom = cy + focal * camera.eye_height / z;
			const int y0 = std::max(0, static_cast<int>(std::ceil(top)));
			const int y1 = std::min(h - 1, static_cast<int>(std::floor(bottom)));
			const Rgb base = surface_color(hit.cls, scene.scenario);
			const float shade = std::clamp(1.0f - hit.dist / kFarPlane, 0.25f, 1.0f);
			for (int y = y0; y <= y1; ++y) {
				frame.at_rgb(y, x, 0) = base.r * shade;
				frame.at_rgb(y, x, 1) = base.g * shade;
				frame.at_rgb(y, x, 2) = base.b * shade;
				frame.at_depth(y, x) = z;
				frame.at_label(y, x) = static_cast<uint8_t>(hit.cls);
			}
		}
	}
	return frame;
}

} // namespace navmini
