#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace navmini {

// Deterministic RNG. Wraps mt19937 but applies its own value transforms so
// that streams do not depend on the standard library's distribution
// implementations. Same seed -> same stream, always.
class Rng {
public:
	explicit Rng(uint64_t seed = 0) : engine_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

	uint32_t next_u32() { return engine_(); }

	// Uniform in [0, 1) with 24 bits of mantissa.
	float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

	float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

	// Uniform integer in [0, n).
	int below(int n) { return static_cast<int>(next_u32() % static_cast<uint32_t>(n)); }

	// Standard normal via Box-Muller, one cached value.
	float normal() {
		if (has_cached_) {
			has_cached_ = false;
			return cached_;
		}
		float u1 = uniform();
		float u2 = uniform();
		if (u1 < 1e-12f) u1 = 1e-12f;
		const float r = std::sqrt(-2.0f * std::log(u1));
		const float a = 6.2831853071795864f * u2;
		cached_ = r * std::sin(a);
		has_cached_ = true;
		return r * std::cos(a);
	}

	float normal(float mean, float sigma) { return mean + sigma * normal(); }

	// Derive an independent child stream (e.g. per worker or per episode).
	Rng split(uint64_t salt) {
		uint64_t s = (static_cast<uint64_t>(next_u32()) << 32) ^ next_u32() ^ (salt * 0x9e3779b97f4a7c15ull);
		return Rng(s);
	}

	template <typename T>
	void shuffle(std::vector<T>& v) {
		for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
			std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
		}
	}

private:
	std::mt19937 engine_;
	bool has_cached_ = false;
	float cached_ = 0.0f;
};

} // namespace navmini
