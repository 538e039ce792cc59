#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navmini/geometry.hpp"
#include "navmini/rng.hpp"

namespace navmini {

enum class Scenario { kSimple, kOffice, kTextured };
enum class DiscreteAction { kLeft = 0, kForward = 1, kRight = 2 };
enum class Event { kNone, kGoalReached, kCollision, kTimeout };

Scenario scenario_from_string(const std::string& name);
std::string scenario_name(Scenario s);
std::string event_name(Event e);

struct SimConfig {
	float dt = 0.2f;
	float forward_speed = 0.5f;  // m/s for the FORWARD action
	float turn_speed = 0.75f;    // rad/s for LEFT / RIGHT
	float robot_radius = 0.3f;
	float pedestrian_radius = 0.3f;
	float goal_radius = 0.5f;
	float arena_half_extent = 6.0f; // 12 x 12 m arena
	int timeout_steps = 180;
	float difficulty_max = 20.0f;
	bool simple_reward = false; // reward collapses to the goal term only
	// actuator limits applied to continuous commands
	float max_forward = 1.0f;
	float max_sideways = 0.5f;
	float max_rotation = 0.75f;
};

// Continuous command (forward m/s, sideways m/s, rotational rad/s), plus the
// discrete id when the command came from the 3-action set.
struct Action {
	std::array<float, 3> cmd{0.0f, 0.0f, 0.0f};
	std::optional<DiscreteAction> discrete;

	static Action from_discrete(DiscreteAction a, const SimConfig& config = {});
	static Action from_continuous(float forward, float sideways, float rotation);
	// Reconstructs the discrete id when the command exactly matches one of
	// the three mapped commands (used when replaying stored episodes).
	static Action from_stored(const std::array<float, 3>& cmd, const SimConfig& config = {});
};

// FORWARD -> (v, 0, 0); LEFT -> (0, 0, +w); RIGHT -> (0, 0, -w).
std::array<float, 3> map_action(DiscreteAction a, const SimConfig& config = {});

struct Pedestrian {
	Vec2 position;
	float radius = 0.3f;
	float speed = 0.5f; // m/s, in [0.3, 1.0]
	Vec2 waypoint;
};

struct StepOutcome {
	float reward = 0.0f;
	bool done = false;
	Event event = Event::kNone;
};

struct SimState {
	SimConfig config;
	Scenario scenario = Scenario::kSimple;
	Vec2 robot_pos;
	float robot_heading = 0.0f;
	std::vector<Pedestrian> pedestrians;
	std::vector<Box> obstacles;
	std::vector<Segment> walls;
	Vec2 goal;
	float difficulty = 0.0f;
	int step_index = 0;
	Rng rng;
	float prev_goal_distance = 0.0f;
	bool done = false;
	Event last_event = Event::kNone;
	uint64_t seed = 0;

	float goal_distance() const { return distance(robot_pos, goal); }
	// Goal coordinates rotated/translated into the robot frame (x forward,
	// y left) - the policy-visible vector observation.
	Vec2 goal_in_robot_frame() const;
};

// Spawns a new episode. Difficulty drives pedestrian count floor(d),
// procedural obstacle count floor(d/2) and the max goal distance 2+d.
// Throws SimError when rejection sampling cannot place everything.
SimState sim_reset(Scenario scenario, float difficulty, uint64_t seed, const SimConfig& config = {});

// Advances one step of dt. Throws SimError when the episode is already done.
StepOutcome sim_step(SimState& state, const Action& action);

// Reward terms: +100 goal, -25 collision, 0.1 * progress, -0.05 turn penalty
// for the discrete LEFT/RIGHT actions. simple_reward keeps only the goal term.
float compute_reward(Event event, float progress_m, const Action& action, bool simple_reward);

// +-1 curriculum update, clamped to [0, difficulty_max].
float update_difficulty(float current, Event outcome, float difficulty_max = 20.0f);

// Stochastic goal-seeking policy producing continuous commands.
Action heuristic_policy(const SimState& state, float noise_sigma, Rng& rng);

} // namespace navmini
