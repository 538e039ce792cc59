#pragma once

#include <string>
#include <vector>

#include "navmini/dataset.hpp"
#include "navmini/policy.hpp"
#include "navmini/world_model.hpp"

namespace navmini {

// mean squared difference between a planar [3,H,W] float image and a u8
// interleaved frame, over pixels and channels
double frame_mse(const std::vector<float>& planar, const uint8_t* frame, int h, int w);

// Per-n prediction errors (n = 1..N) plus the constant-grey and
// static-assumption upper-bound baselines.
struct DreamErrorCurve {
	int context = 0;
	int horizon = 0;
	std::vector<float> image_mse;   // model, per n
	std::vector<float> vector_mse;  // model, per n
	std::vector<float> grey_image;
	std::vector<float> grey_vector;
	std::vector<float> static_image;
	std::vector<float> static_vector;
	int windows_used = 0;
	int windows_skipped = 0;

	void save_csv(const std::string& path) const;
};

// Open-loop n-step error against ground truth, actions taken from the real
// sequence, deterministic encodings. Windows slide over every validation
// episode; episodes shorter than context+n are skipped (and counted).
DreamErrorCurve nstep_dream_error(const WorldModel& wm, const Dataset& validation, int context, int horizon, int max_windows);

// Baselines only (no model): grey predicts 0.5 images / (0,0) vectors;
// static repeats the last context frame and vector.
DreamErrorCurve baseline_errors(const Dataset& validation, int context, int horizon, int max_windows);

// Ground-truth row above dream row, one column per step (context + dreamed).
void save_dream_filmstrip(const WorldModel& wm, const Episode& ep, int start, int context, int horizon,
	const std::string& png_path);

// ----- policy evaluation -----
struct PolicyEvalResult {
	float success_rate = 0.0f;
	std::vector<std::string> events; // per episode
	std::vector<int> lengths;
	std::vector<float> total_rewards;

	void save_csv(const std::string& path) const;
};

// Argmax rollouts at a fixed difficulty. `wm` backs frozen-wm bundles and
// must be null for end-to-end bundles (their encoder travels in the bundle).
PolicyEvalResult evaluate_policy(const PolicyBundle& bundle, const WorldModel* wm, const EnvConfig& env_config,
	float difficulty, int episodes, uint64_t seed);

} // namespace navmini
