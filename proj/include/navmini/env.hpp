#pragma once

#include <cstdint>
#include <vector>

#include "navmini/renderer.hpp"
#include "navmini/sim.hpp"

namespace navmini {

// Policy-visible state: the rendered camera frame (8-bit, row-major H*W*3)
// plus the goal vector in the robot frame.
struct Observation {
	int height = 0;
	int width = 0;
	std::vector<uint8_t> rgb;
	Vec2 goal_vec;
};

struct EnvConfig {
	Scenario scenario = Scenario::kSimple;
	SimConfig sim;
	CameraModel camera;
};

// Gym-style wrapper tying the simulator to the renderer.
class Env {
public:
	explicit Env(EnvConfig config) : config_(std::move(config)) {}

	Observation reset(float difficulty, uint64_t seed) {
		state_ = sim_reset(config_.scenario, difficulty, seed, config_.sim);
		return observe();
	}

	struct StepResult {
		Observation obs;
		StepOutcome outcome;
	};

	StepResult step(const Action& action) {
		StepResult r;
		r.outcome = sim_step(state_, action);
		r.obs = observe();
		return r;
	}

	Observation observe() const {
		const Frame frame = render(state_, config_.camera);
		Observation obs;
		obs.height = frame.height;
		obs.width = frame.width;
		obs.rgb.resize(frame.rgb.size());
		for (size_t i = 0; i < frame.rgb.size(); ++i) {
			obs.rgb[i] = static_cast<uint8_t>(frame.rgb[i] * 255.0f + 0.5f);
		}
		obs.goal_vec = state_.goal_in_robot_frame();
		return obs;
	}

	// Full frame including depth and label ground truth.
	Frame render_full() const { return render(state_, config_.camera); }

	const SimState& state() const { return state_; }
	SimState& state_mut() { return state_; }
	const EnvConfig& config() const { return config_; }

private:
	EnvConfig config_;
	SimState state_;
};

} // namespace navmini
