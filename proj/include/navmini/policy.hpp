#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "navmini/env.hpp"
#include "navmini/param_set.hpp"
#include "navmini/world_model.hpp"

namespace navmini {

// 3-way discrete controller: [feature stack ; goal vector] -> MLP trunk ->
// action logits + state value.
struct PolicyConfig {
	int feature_dim = 64;
	int seq_len = 1; // k; input width = k*feature_dim + 2
	int hidden = 256;

	int input_dim() const { return seq_len * feature_dim + 2; }
};

// parameters live under the "pol." prefix of a ParamSet
void build_policy_params(ParamSet& params, const PolicyConfig& config, Rng& rng);

struct PolicyOut {
	Tensor logits; // [N,3]
	Tensor value;  // [N,1]
};
PolicyOut policy_forward(const ParamSet& params, const PolicyConfig& config, const Tensor& input);

// Stacks the last k features (zero-padded at episode start) and appends the
// goal vector.
std::vector<float> assemble_policy_input(
	const PolicyConfig& config, const std::deque<std::vector<float>>& history, const Vec2& goal_vec);

int sample_action(const std::vector<float>& probs3, Rng& rng);
int argmax_action(const float* logits3);

// ----- generalized advantage estimation -----
struct GaeResult {
	std::vector<float> advantages;
	std::vector<float> returns;
};
// bootstrap_value estimates V(s_T) past the horizon; it is ignored (treated
// as 0) when the last step terminated.
GaeResult gae(const std::vector<float>& rewards, const std::vector<float>& values, const std::vector<uint8_t>& dones,
	float gamma, float lambda, float bootstrap_value);

// ----- ppo -----
struct PpoConfig {
	float lr = 3e-4f;
	float clip = 0.2f;
	float gamma = 0.99f;
	float lambda = 0.95f;
	int epochs = 4;
	int minibatch = 512;
	float value_coef = 0.5f;
	float entropy_coef = 0.01f;
	int n_envs = 8;
	int rollout_steps = 256;
};

struct Transition {
	std::vector<float> input;   // assembled policy input (frozen features path)
	std::vector<uint8_t> frame; // raw frame (end-to-end path)
	std::array<float, 2> goal_vec{0.0f, 0.0f};
	int action = 0;
	float log_prob = 0.0f;
	float reward = 0.0f;
	float value = 0.0f;
	uint8_t done = 0;
	float advantage = 0.0f;
	float ret = 0.0f;
};

struct PpoStats {
	float policy_loss = 0.0f;
	float value_loss = 0.0f;
	float entropy = 0.0f;
};

// Clipped-surrogate update over shuffled minibatches. When `e2e_image_h` is
// set, transitions carry raw frames and gradients flow through the "enc.*"
// encoder entries of `params` alongside the policy head.
PpoStats ppo_update(std::vector<Transition>& batch, ParamSet& params, const PolicyConfig& config, const PpoConfig& ppo,
	Rng& rng, int& opt_step, std::optional<int> e2e_image_h = std::nullopt);

// ----- full training loop -----
struct TrainPpoConfig {
	PpoConfig ppo;
	PolicyConfig policy;
	EnvConfig env;
	std::string feature_source = "frozen-wm"; // or "end-to-end"
	int total_steps = 150000;
	float start_difficulty = 0.0f;
	bool fixed_difficulty = false; // disable the curriculum (keep start value)
	float success_stop = -1.0f;    // early stop threshold on the 100-episode rate
	int log_interval_steps = 2048;
};

struct TrainPpoResult {
	float final_success_rate = 0.0f;
	float final_mean_difficulty = 0.0f;
	float max_difficulty = 0.0f;
	int env_steps = 0;
	bool reached_stop = false;
	int steps_to_stop = 0;
	uint64_t wm_checksum_before = 0;
	uint64_t wm_checksum_after = 0;
};

// Vectorized curriculum PPO. `wm` supplies frozen features in frozen-wm
// mode and must be null in end-to-end mode. Writes the policy checkpoint
// (base.{json,bin,meta.json}) and a training curve csv
// (env_steps,mean_difficulty,success_rate_100ep,seed).
TrainPpoResult train_ppo(const WorldModel* wm, const TrainPpoConfig& config, uint64_t seed, const std::string& ckpt_base,
	const std::string& curve_csv);

// ----- policy checkpoint bundle -----
struct PolicyBundle {
	PolicyConfig config;
	std::string feature_source;
	int image_h = 0;
	ParamSet params; // pol.* (+ enc.* in end-to-end mode)

	void save(const std::string& base_path) const;
	static PolicyBundle load(const std::string& base_path);
};

} // namespace navmini
