#pragma once

#include <algorithm>
#include <cmath>

namespace navmini {

struct Vec2 {
	float x = 0.0f;
	float y = 0.0f;

	Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
	Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
	Vec2 operator*(float s) const { return {x * s, y * s}; }
	float dot(Vec2 o) const { return x * o.x + y * o.y; }
	float norm() const { return std::sqrt(x * x + y * y); }
};

struct Segment {
	Vec2 a, b;
};

struct Box {
	Vec2 lo, hi; // axis-aligned, lo <= hi componentwise
};

// Wraps into (-pi, pi].
inline float wrap_angle(float a) {
	constexpr float kPi = 3.14159265358979323846f;
	constexpr float kTwoPi = 2.0f * kPi;
	a = std::fmod(a, kTwoPi);
	if (a <= -kPi) a += kTwoPi;
	if (a > kPi) a -= kTwoPi;
	return a;
}

inline float distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline float point_segment_distance(Vec2 p, const Segment& s) {
	const Vec2 ab = s.b - s.a;
	const float len2 = ab.dot(ab);
	if (len2 <= 0.0f) return distance(p, s.a);
	const float t = std::clamp((p - s.a).dot(ab) / len2, 0.0f, 1.0f);
	return distance(p, s.a + ab * t);
}

inline float point_box_distance(Vec2 p, const Box& b) {
	const float cx = std::clamp(p.x, b.lo.x, b.hi.x);
	const float cy = std::clamp(p.y, b.lo.y, b.hi.y);
	return distance(p, {cx, cy});
}

inline bool point_in_box(Vec2 p, const Box& b) {
	return p.x >= b.lo.x && p.x <= b.hi.x && p.y >= b.lo.y && p.y <= b.hi.y;
}

// Ray from `origin` along unit `dir`; returns hit distance or a negative
// value on miss.
inline float ray_segment(Vec2 origin, Vec2 dir, const Segment& s) {
	const Vec2 v1 = origin - s.a;
	const Vec2 v2 = s.b - s.a;
	const Vec2 v3{-dir.y, dir.x};
	const float denom = v2.dot(v3);
	if (std::abs(denom) < 1e-9f) return -1.0f;
	const float t1 = (v2.x * v1.y - v2.y * v1.x) / denom;
	const float t2 = v1.dot(v3) / denom;
	if (t1 >= 0.0f && t2 >= 0.0f && t2 <= 1.0f) return t1;
	return -1.0f;
}

inline float ray_circle(Vec2 origin, Vec2 dir, Vec2 center, float radius) {
	const Vec2 oc = origin - center;
	const float b = oc.dot(dir);
	const float c = oc.dot(oc) - radius * radius;
	const float disc = b * b - c;
	if (disc < 0.0f) return -1.0f;
	const float sq = std::sqrt(disc);
	float t = -b - sq;
	if (t < 0.0f) t = -b + sq;
	return t >= 0.0f ? t : -1.0f;
}

// Slab test against an axis-aligned box.
inline float ray_box(Vec2 origin, Vec2 dir, const Box& b) {
	float tmin = 0.0f;
	float tmax = 1e30f;
	for (int axis = 0; axis < 2; ++axis) {
		const float o = axis == 0 ? origin.x : origin.y;
		const float d = axis == 0 ? dir.x : dir.y;
		const float lo = axis == 0 ? b.lo.x : b.lo.y;
		const float hi = axis == 0 ? b.hi.x : b.hi.y;
		if (std::abs(d) < 1e-9f) {
			if (o < lo || o > hi) return -1.0f;
			continue;
		}
		float t1 = (lo - o) / d;
		float t2 = (hi - o) / d;
		if (t1 > t2) std::swap(t1, t2);
		tmin = std::max(tmin, t1);
		tmax = std::min(tmax, t2);
		if (tmin > tmax) return -1.0f;
	}
	return tmin;
}

} // namespace navmini
