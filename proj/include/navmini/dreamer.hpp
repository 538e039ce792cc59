#pragma once

#include <string>
#include <vector>

#include "navmini/policy.hpp"
#include "navmini/world_model.hpp"

namespace navmini {

// One imagined step: feature/goal seen by the policy, the action taken and
// the reward-head output. Rewards/values/returns are plain floats; only the
// policy log-prob / entropy stay in the graph.
struct ImaginedStep {
	std::vector<float> feature;
	std::array<float, 2> goal_vec;
	int action = 0;
	std::array<float, 3> cmd{0.0f, 0.0f, 0.0f};
	float reward = 0.0f;
	float value = 0.0f;
	float lambda_return = 0.0f;
};

struct ImaginedBatch {
	int horizon = 0;
	int batch = 0;
	std::vector<ImaginedStep> steps;       // horizon * batch, time-major
	std::vector<float> bootstrap_values;   // batch, critic at the (H+1)-th state
	std::vector<Tensor> log_probs;         // per time step, [batch] graph tensors
	std::vector<Tensor> entropies;         // per time step, scalar graph tensors
};

// Rolls the world model forward `horizon` steps from real start windows,
// feeding the policy's sampled actions (mapped to continuous commands).
// World-model weights stay frozen inside the rollout; the policy log-probs
// keep their graph for the actor update.
ImaginedBatch imagine_rollout(const WorldModel& wm, const ParamSet& actor, const PolicyConfig& policy_config,
	const ParamSet& critic, const Dataset& starts, int batch, int horizon, int context, Rng& rng);

// lambda-returns over an imagined sequence (no terminations within horizon).
std::vector<float> lambda_returns(
	const std::vector<float>& rewards, const std::vector<float>& values, float bootstrap, float gamma, float lambda);

struct DreamerUpdateStats {
	float actor_loss = 0.0f;
	float critic_loss = 0.0f;
	float mean_return = 0.0f;
};

// Value regression to the lambda-returns; reinforce actor on the
// lambda-return advantages plus an entropy bonus.
DreamerUpdateStats dreamer_update(ImaginedBatch& batch, ParamSet& actor, const PolicyConfig& policy_config, ParamSet& critic,
	float gamma, float lambda, float entropy_coef, float actor_lr, float critic_lr, int& actor_step, int& critic_step);

struct DreamerConfig {
	WorldModelConfig wm;  // reward_head is forced on
	PolicyConfig policy;
	EnvConfig env;
	int total_env_steps = 60000;
	int episodes_per_iter = 4;
	int wm_steps_per_iter = 25;
	int policy_updates_per_iter = 8;
	int wm_batch_size = 8;
	float wm_lr = 1e-3f;
	int imagine_batch = 24;
	int horizon = 15;
	int imagine_context = 4;
	float gamma = 0.99f;
	float lambda_ret = 0.95f;
	float entropy_coef = 0.003f;
	float actor_lr = 3e-4f;
	float critic_lr = 3e-4f;
	int replay_capacity = 400; // episodes
	float start_difficulty = 0.0f;
	bool fixed_difficulty = false;
	std::string warm_start_wm; // optional checkpoint base to initialize W
	int log_interval_steps = 2048;
};

struct TrainDreamerResult {
	float final_success_rate = 0.0f;
	float final_mean_difficulty = 0.0f;
	float max_difficulty = 0.0f;
	int env_steps = 0;
};

// Fig-style loop: collect rollouts with the current policy -> train W on
// the replay -> imagine -> update actor-critic. Writes the actor policy
// checkpoint, the world-model checkpoint and a training curve csv.
TrainDreamerResult train_dreamer(const DreamerConfig& config, uint64_t seed, const std::string& policy_ckpt_base,
	const std::string& wm_ckpt_base, const std::string& curve_csv);

} // namespace navmini
