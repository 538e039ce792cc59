#include "navmini/sim.hpp"

#include <cmath>

#include "navmini/error.hpp"

namespace navmini {

namespace {

constexpr float kPi = 3.14159265358979323846f;
constexpr int kMaxSpawnTries = 1000;
constexpr float kSpawnMargin = 0.1f;
constexpr float kMinGoalDistance = 1.0f;
constexpr float kWaypointArrival = 0.3f;

// Fixed office furniture (tables, shelves, plants) inside the 12x12 arena.
const std::vector<Box> kOfficeFurniture = {
	{{-3.5f, -1.0f}, {-1.5f, 0.0f}},
	{{1.5f, 1.0f}, {3.5f, 2.0f}},
	{{-0.5f, 3.0f}, {0.5f, 4.5f}},
	{{2.0f, -4.0f}, {4.0f, -3.2f}},
	{{-4.8f, 2.2f}, {-3.8f, 3.6f}},
	{{4.2f, -1.2f}, {5.0f, 0.8f}},
};

const Vec2 kOfficeRobotSpawn{-4.5f, -4.5f};
constexpr float kOfficeRobotHeading = 0.25f * kPi;

// Goal posts ordered by distance from the office robot spawn.
const std::vector<Vec2> kOfficeGoalPosts = {
	{-3.2f, -3.8f}, {-2.6f, -3.4f}, {-1.2f, -2.8f}, {0.2f, -2.0f}, {1.2f, 0.2f}, {3.2f, 1.4f}, {4.2f, 3.4f},
};

bool inside_arena(Vec2 p, float half, float margin) {
	return p.x >= -half + margin && p.x <= half - margin && p.y >= -half + margin && p.y <= half - margin;
}

bool disc_free(const SimState& s, Vec2 p, float radius, bool against_robot, bool against_goal, bool against_peds) {
	if (against_robot && distance(p, s.robot_pos) < radius + s.config.robot_radius + kSpawnMargin) return false;
	if (against_goal && distance(p, s.goal) < radius + s.config.goal_radius + kSpawnMargin) return false;
	for (const auto& box : s.obstacles) {
		if (point_box_distance(p, box) < radius + kSpawnMargin) return false;
	}
	if (against_peds) {
		for (const auto& ped : s.pedestrians) {
			if (distance(p, ped.position) < radius + ped.radius + kSpawnMargin) return false;
		}
	}
	return true;
}

Vec2 sample_in_arena(Rng& rng, float half, float margin) {
	return {rng.uniform(-half + margin, half - margin), rng.uniform(-half + margin, half - margin)};
}

[[noreturn]] void spawn_failure(const char* what, float difficulty, uint64_t seed) {
	throw SimError(std::string("sim_reset: could not place ") + what + " after " + std::to_string(kMaxSpawnTries) +
		" tries (difficulty " + std::to_string(difficulty) + ", seed " + std::to_string(seed) + ")");
}

bool robot_collides(const SimState& s, Vec2 pos) {
	const float r = s.config.robot_radius;
	for (const auto& ped : s.pedestrians) {
		if (distance(pos, ped.position) < r + ped.radius) return true;
	}
	for (const auto& box : s.obstacles) {
		if (point_box_distance(pos, box) < r) return true;
	}
	for (const auto& wall : s.walls) {
		if (point_segment_distance(pos, wall) < r) return true;
	}
	return false;
}

} // namespace

Scenario scenario_from_string(const std::string& name) {
	if (name == "simple") return Scenario::kSimple;
	if (name == "office") return Scenario::kOffice;
	if (name == "textured") return Scenario::kTextured;
	throw ConfigError("unknown scenario '" + name + "' (expected simple, office or textured)");
}

std::string scenario_name(Scenario s) {
	switch (s) {
		case Scenario::kSimple: return "simple";
		case Scenario::kOffice: return "office";
		case Scenario::kTextured: return "textured";
	}
	return "?";
}

std::string event_name(Event e) {
	switch (e) {
		case Event::kNone: return "none";
		case Event::kGoalReached: return "goal_reached";
		case Event::kCollision: return "collision";
		case Event::kTimeout: return "timeout";
	}
	return "?";
}

std::array<float, 3> map_action(DiscreteAction a, const SimConfig& config) {
	switch (a) {
		case DiscreteAction::kLeft: return {0.0f, 0.0f, config.turn_speed};
		case DiscreteAction::kForward: return {config.forward_speed, 0.0f, 0.0f};
		case DiscreteAction::kRight: return {0.0f, 0.0f, -config.turn_speed};
	}
	throw SimError("map_action: invalid action id");
}

Action Action::from_discrete(DiscreteAction a, const SimConfig& config) {
	Action act;
	act.cmd = map_action(a, config);
	act.discrete = a;
	return act;
}

Action Action::from_continuous(float forward, float sideways, float rotation) {
	Action act;
	act.cmd = {forward, sideways, rotation};
	return act;
}

Action Action::from_stored(const std::array<float, 3>& cmd, const SimConfig& config) {
	for (DiscreteAction a : {DiscreteAction::kLeft, DiscreteAction::kForward, DiscreteAction::kRight}) {
		if (map_action(a, config) == cmd) return from_discrete(a, config);
	}
	Action act;
	act.cmd = cmd;
	return act;
}

Vec2 SimState::goal_in_robot_frame() const {
	const Vec2 d = goal - robot_pos;
	const float c = std::cos(robot_heading);
	const float s = std::sin(robot_heading);
	return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

SimState sim_reset(Scenario scenario, float difficulty, uint64_t seed, const SimConfig& config) {
	if (difficulty < 0.0f) throw SimError("sim_reset: difficulty must be >= 0");
	SimState s;
	s.config = config;
	s.scenario = scenario;
	s.difficulty = difficulty;
	s.seed = seed;
	s.rng = Rng(seed);
	const float half = config.arena_half_extent;
	s.walls = {
		{{-half, -half}, {half, -half}},
		{{half, -half}, {half, half}},
		{{half, half}, {-half, half}},
		{{-half, half}, {-half, -half}},
	};

	const int n_pedestrians = static_cast<int>(std::floor(difficulty));
	const float max_goal_dist = 2.0f + difficulty;
	const bool procedural = scenario != Scenario::kOffice;

	if (procedural) {
		s.robot_pos = sample_in_arena(s.rng, half, config.robot_radius + kSpawnMargin);
		s.robot_heading = s.rng.uniform(-kPi, kPi);

		// obstacles: floor(difficulty / 2) boxes
		const int n_obstacles = static_cast<int>(std::floor(difficulty / 2.0f));
		for (int i = 0; i < n_obstacles; ++i) {
			bool ok = false;
			for (int t = 0; t < kMaxSpawnTries && !ok; ++t) {
				const float w = s.rng.uniform(0.4f, 1.2f);
				const float h = s.rng.uniform(0.4f, 1.2f);
				const Vec2 c = sample_in_arena(s.rng, half, std::max(w, h) * 0.5f + 0.5f);
				Box box{{c.x - w * 0.5f, c.y - h * 0.5f}, {c.x + w * 0.5f, c.y + h * 0.5f}};
				if (point_box_distance(s.robot_pos, box) < config.robot_radius + kSpawnMargin) continue;
				s.obstacles.push_back(box);
				ok = true;
			}
			if (!ok) spawn_failure("obstacle", difficulty, seed);
		}

		// goal: uniform in the admissible disc, collision-free
		bool goal_ok = false;
		for (int t = 0; t < kMaxSpawnTries && !goal_ok; ++t) {
			const float ang = s.rng.uniform(-kPi, kPi);
			const float rad = std::sqrt(s.rng.uniform()) * max_goal_dist;
			const Vec2 g = s.robot_pos + Vec2{std::cos(ang), std::sin(ang)} * rad;
			if (!inside_arena(g, half, config.goal_radius + kSpawnMargin)) continue;
			if (distance(g, s.robot_pos) < kMinGoalDistance) continue;
			bool clear = true;
			for (const auto& box : s.obstacles) {
				if (point_box_distance(g, box) < config.goal_radius + kSpawnMargin) clear = false;
			}
			if (!clear) continue;
			s.goal = g;
			goal_ok = true;
		}
		if (!goal_ok) spawn_failure("goal", difficulty, seed);

		for (int i = 0; i < n_pedestrians; ++i) {
			bool ok = false;
			for (int t = 0; t < kMaxSpawnTries && !ok; ++t) {
				Pedestrian ped;
				ped.radius = config.pedestrian_radius;
				ped.position = sample_in_arena(s.rng, half, ped.radius + kSpawnMargin);
				if (!disc_free(s, ped.position, ped.radius, true, true, true)) continue;
				ped.speed = s.rng.uniform(0.3f, 1.0f);
				ped.waypoint = sample_in_arena(s.rng, half, ped.radius + kSpawnMargin);
				s.pedestrians.push_back(ped);
				ok = true;
			}
			if (!ok) spawn_failure("pedestrian", difficulty, seed);
		}
	} else {
		// office: fixed furniture, predetermined robot/goal/pedestrian spawns
		s.obstacles = kOfficeFurniture;
		s.robot_pos = kOfficeRobotSpawn;
		s.robot_heading = kOfficeRobotHeading;

		const Vec2* chosen = nullptr;
		for (const auto& post : kOfficeGoalPosts) {
			const float d = distance(post, s.robot_pos);
			if (d <= max_goal_dist && d >= kMinGoalDistance) chosen = &post;
		}
		if (chosen == nullptr) chosen = &kOfficeGoalPosts.front();
		s.goal = *chosen;

		// spawn layout depends only on the difficulty level
		Rng layout_rng(9000 + static_cast<uint64_t>(std::floor(difficulty)));
		for (int i = 0; i < n_pedestrians; ++i) {
			bool ok = false;
			for (int t = 0; t < kMaxSpawnTries && !ok; ++t) {
				Pedestrian ped;
				ped.radius = config.pedestrian_radius;
				ped.position = sample_in_arena(layout_rng, half, ped.radius + kSpawnMargin);
				if (!disc_free(s, ped.position, ped.radius, true, true, true)) continue;
				ped.speed = 0.3f + 0.07f * static_cast<float>(i % 10);
				ped.waypoint = sample_in_arena(layout_rng, half, ped.radius + kSpawnMargin);
				s.pedestrians.push_back(ped);
				ok = true;
			}
			if (!ok) spawn_failure("pedestrian", difficulty, seed);
		}
	}

	s.prev_goal_distance = s.goal_distance();
	return s;
}

float compute_reward(Event event, float progress_m, const Action& action, bool simple_reward) {
	const float r_goal = event == Event::kGoalReached ? 100.0f : 0.0f;
	if (simple_reward) return r_goal;
	const float r_collision = event == Event::kCollision ? -25.0f : 0.0f;
	const float r_progress = 0.1f * progress_m;
	const bool turning = action.discrete && (*action.discrete == DiscreteAction::kLeft || *action.discrete == DiscreteAction::kRight);
	const float r_turn = turning ? -0.05f : 0.0f;
	return r_goal + r_collision + r_progress + r_turn;
}

float update_difficulty(float current, Event outcome, float difficulty_max) {
	float next = current;
	if (outcome == Event::kGoalReached) {
		next = current + 1.0f;
	} else if (outcome == Event::kCollision || outcome == Event::kTimeout) {
		next = current - 1.0f;
	}
	return std::clamp(next, 0.0f, difficulty_max);
}

StepOutcome sim_step(SimState& state, const Action& action) {
	if (state.done) throw SimError("sim_step: episode already done (event " + event_name(state.last_event) + ")");

	const SimConfig& cfg = state.config;
	const Vec2 old_pos = state.robot_pos;

	// heading first, then translate along the new heading
	state.robot_heading = wrap_angle(state.robot_heading + action.cmd[2] * cfg.dt);
	const float c = std::cos(state.robot_heading);
	const float sn = std::sin(state.robot_heading);
	const Vec2 fwd{c, sn};
	const Vec2 left{-sn, c};
	Vec2 new_pos = state.robot_pos + (fwd * action.cmd[0] + left * action.cmd[1]) * cfg.dt;

	// pedestrians advance straight toward their waypoints
	for (auto& ped : state.pedestrians) {
		const Vec2 to_wp = ped.waypoint - ped.position;
		const float d = to_wp.norm();
		const float travel = ped.speed * cfg.dt;
		if (d <= travel) {
			ped.position = ped.waypoint;
		} else {
			ped.position = ped.position + to_wp * (travel / d);
		}
		if (distance(ped.position, ped.waypoint) < kWaypointArrival) {
			ped.waypoint = sample_in_arena(state.rng, cfg.arena_half_extent, ped.radius + kSpawnMargin);
		}
	}

	Event event = Event::kNone;
	if (robot_collides(state, new_pos)) {
		event = Event::kCollision;
		new_pos = old_pos; // stopped at the point of impact; episode ends here
	}
	state.robot_pos = new_pos;

	const float goal_dist = state.goal_distance();
	if (event == Event::kNone && goal_dist < cfg.goal_radius) event = Event::kGoalReached;

	state.step_index += 1;
	if (event == Event::kNone && state.step_index >= cfg.timeout_steps) event = Event::kTimeout;

	const float progress = state.prev_goal_distance - goal_dist;
	state.prev_goal_distance = goal_dist;

	StepOutcome out;
	out.event = event;
	out.done = event != Event::kNone;
	out.reward = compute_reward(event, progress, action, cfg.simple_reward);
	state.done = out.done;
	state.last_event = event;
	return out;
}

Action heuristic_policy(const SimState& state, float noise_sigma, Rng& rng) {
	const Vec2 to_goal = state.goal - state.robot_pos;
	const float bearing = std::atan2(to_goal.y, to_goal.x);
	// wrap_angle maps the exact-behind case to +pi, so the tie breaks left
	const float err = wrap_angle(bearing - state.robot_heading);
	const SimConfig& cfg = state.config;
	float rot = std::clamp(err, -cfg.max_rotation, cfg.max_rotation);
	float fwd = std::abs(err) < 0.5f ? cfg.forward_speed : 0.0f;
	float side = 0.0f;
	if (noise_sigma > 0.0f) {
		fwd += rng.normal(0.0f, noise_sigma);
		side += rng.normal(0.0f, noise_sigma);
		rot += rng.normal(0.0f, noise_sigma);
	}
	fwd = std::clamp(fwd, 0.0f, cfg.max_forward);
	side = std::clamp(side, -cfg.max_sideways, cfg.max_sideways);
	rot = std::clamp(rot, -cfg.max_rotation, cfg.max_rotation);
	return Action::from_continuous(fwd, side, rot);
}

} // namespace navmini
