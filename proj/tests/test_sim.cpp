#include <doctest.h>

#include <cmath>

#include "navmini/error.hpp"
#include "navmini/sim.hpp"

using namespace navmini;

namespace {

bool states_equal(const SimState& a, const SimState& b) {
	if (a.robot_pos.x != b.robot_pos.x || a.robot_pos.y != b.robot_pos.y) return false;
	if (a.robot_heading != b.robot_heading) return false;
	if (a.goal.x != b.goal.x || a.goal.y != b.goal.y) return false;
	if (a.pedestrians.size() != b.pedestrians.size() || a.obstacles.size() != b.obstacles.size()) return false;
	for (size_t i = 0; i < a.pedestrians.size(); ++i) {
		const auto& p = a.pedestrians[i];
		const auto& q = b.pedestrians[i];
		if (p.position.x != q.position.x || p.position.y != q.position.y || p.speed != q.speed ||
			p.waypoint.x != q.waypoint.x || p.waypoint.y != q.waypoint.y) {
			return false;
		}
	}
	return true;
}

} // namespace

TEST_CASE("reset at difficulty 0 spawns an empty arena") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 7);
	CHECK(s.pedestrians.empty());
	CHECK(s.obstacles.empty());
	CHECK(s.goal_distance() <= 2.0f);
	CHECK(s.prev_goal_distance == doctest::Approx(s.goal_distance()));
}

TEST_CASE("reset difficulty map arithmetic") {
	SimState s = sim_reset(Scenario::kSimple, 5.0f, 123);
	CHECK(s.pedestrians.size() == 5);
	CHECK(s.obstacles.size() == 2);
	CHECK(s.goal_distance() <= 7.0f);
	for (const auto& p : s.pedestrians) {
		CHECK(p.speed >= 0.3f);
		CHECK(p.speed <= 1.0f);
	}
}

TEST_CASE("reset is deterministic per (scenario, difficulty, seed)") {
	for (auto scenario : {Scenario::kSimple, Scenario::kOffice, Scenario::kTextured}) {
		SimState a = sim_reset(scenario, 3.0f, 99);
		SimState b = sim_reset(scenario, 3.0f, 99);
		CHECK(states_equal(a, b));
	}
	SimState a = sim_reset(Scenario::kSimple, 3.0f, 99);
	SimState c = sim_reset(Scenario::kSimple, 3.0f, 100);
	CHECK(!states_equal(a, c));
}

TEST_CASE("no spawn overlaps at reset") {
	for (uint64_t seed = 0; seed < 20; ++seed) {
		SimState s = sim_reset(Scenario::kSimple, 8.0f, seed);
		const float r = s.config.robot_radius;
		for (const auto& p : s.pedestrians) {
			CHECK(distance(p.position, s.robot_pos) >= r + p.radius);
			CHECK(distance(p.position, s.goal) >= p.radius + s.config.goal_radius);
			for (const auto& box : s.obstacles) CHECK(point_box_distance(p.position, box) >= p.radius);
		}
		for (const auto& box : s.obstacles) {
			CHECK(point_box_distance(s.robot_pos, box) >= r);
			CHECK(point_box_distance(s.goal, box) >= s.config.goal_radius);
		}
	}
}

TEST_CASE("office layout is predetermined") {
	SimState a = sim_reset(Scenario::kOffice, 4.0f, 1);
	SimState b = sim_reset(Scenario::kOffice, 4.0f, 982734);
	CHECK(a.robot_pos.x == b.robot_pos.x);
	CHECK(a.robot_heading == b.robot_heading);
	CHECK(a.goal.x == b.goal.x);
	REQUIRE(a.pedestrians.size() == b.pedestrians.size());
	for (size_t i = 0; i < a.pedestrians.size(); ++i) {
		CHECK(a.pedestrians[i].position.x == b.pedestrians[i].position.x);
	}
	CHECK(!a.obstacles.empty());
}

TEST_CASE("map_action velocity table") {
	CHECK(map_action(DiscreteAction::kForward) == std::array<float, 3>{0.5f, 0.0f, 0.0f});
	CHECK(map_action(DiscreteAction::kLeft) == std::array<float, 3>{0.0f, 0.0f, 0.75f});
	CHECK(map_action(DiscreteAction::kRight) == std::array<float, 3>{0.0f, 0.0f, -0.75f});
}

TEST_CASE("map_action is injective with zero strafe") {
	auto l = map_action(DiscreteAction::kLeft);
	auto f = map_action(DiscreteAction::kForward);
	auto r = map_action(DiscreteAction::kRight);
	CHECK(l != f);
	CHECK(f != r);
	CHECK(l != r);
	CHECK(l[1] == 0.0f);
	CHECK(f[1] == 0.0f);
	CHECK(r[1] == 0.0f);
}

TEST_CASE("action reconstruction from stored commands") {
	Action a = Action::from_stored({0.5f, 0.0f, 0.0f});
	REQUIRE(a.discrete.has_value());
	CHECK(*a.discrete == DiscreteAction::kForward);
	Action b = Action::from_stored({0.31f, 0.02f, -0.11f});
	CHECK(!b.discrete.has_value());
}

TEST_CASE("forward step integrates 0.1 m") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {0.0f, 0.0f};
	s.robot_heading = 0.0f;
	s.goal = {4.0f, 4.0f};
	s.prev_goal_distance = s.goal_distance();
	StepOutcome out = sim_step(s, Action::from_discrete(DiscreteAction::kForward));
	CHECK(s.robot_pos.x == doctest::Approx(0.1f));
	CHECK(s.robot_pos.y == doctest::Approx(0.0f));
	CHECK(out.event == Event::kNone);
	CHECK(!out.done);
}

TEST_CASE("turn then translate along the new heading") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {0.0f, 0.0f};
	s.robot_heading = 0.0f;
	s.goal = {-4.0f, 4.0f};
	s.prev_goal_distance = s.goal_distance();
	sim_step(s, Action::from_continuous(0.5f, 0.0f, 0.75f));
	const float h = 0.75f * 0.2f;
	CHECK(s.robot_heading == doctest::Approx(h));
	CHECK(s.robot_pos.x == doctest::Approx(0.1f * std::cos(h)));
	CHECK(s.robot_pos.y == doctest::Approx(0.1f * std::sin(h)));
}

TEST_CASE("goal threshold ends the episode") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {0.0f, 0.0f};
	s.robot_heading = 0.0f;
	s.goal = {0.55f, 0.0f};
	s.prev_goal_distance = s.goal_distance();
	StepOutcome out = sim_step(s, Action::from_discrete(DiscreteAction::kForward));
	CHECK(out.event == Event::kGoalReached);
	CHECK(out.done);
	CHECK(s.done);
}

TEST_CASE("driving into a wall is a collision and stops the robot") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {5.75f, 0.0f}; // 0.25 m of clearance to the x=6 wall edge
	s.robot_heading = 0.0f;
	s.goal = {-4.0f, 0.0f};
	s.prev_goal_distance = s.goal_distance();
	StepOutcome out = sim_step(s, Action::from_discrete(DiscreteAction::kForward));
	CHECK(out.event == Event::kCollision);
	CHECK(out.done);
	CHECK(s.robot_pos.x == doctest::Approx(5.75f)); // stopped, not teleported
}

TEST_CASE("stepping a done episode is rejected") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.done = true;
	CHECK_THROWS_AS(sim_step(s, Action::from_discrete(DiscreteAction::kForward)), SimError);
}

TEST_CASE("timeout after 180 steps") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 17);
	s.goal = {5.9f, 5.9f}; // stay away from the goal
	s.robot_pos = {-5.0f, -5.0f};
	s.robot_heading = 0.0f;
	s.prev_goal_distance = s.goal_distance();
	StepOutcome out;
	int steps = 0;
	while (!s.done) {
		out = sim_step(s, Action::from_discrete(DiscreteAction::kLeft)); // spin in place
		++steps;
		REQUIRE(steps <= 200);
	}
	CHECK(out.event == Event::kTimeout);
	CHECK(steps == 180);
}

TEST_CASE("reward oracle covers all four terms") {
	Action fwd = Action::from_discrete(DiscreteAction::kForward);
	Action left = Action::from_discrete(DiscreteAction::kLeft);
	CHECK(compute_reward(Event::kGoalReached, 0.1f, fwd, false) == doctest::Approx(100.01f));
	CHECK(compute_reward(Event::kCollision, 0.0f, fwd, false) == doctest::Approx(-25.0f));
	CHECK(compute_reward(Event::kNone, 0.0f, left, false) == doctest::Approx(-0.05f));
	CHECK(compute_reward(Event::kNone, 0.5f, fwd, false) == doctest::Approx(0.05f));
	CHECK(compute_reward(Event::kNone, -0.3f, fwd, false) == doctest::Approx(-0.03f));
	// simple-reward mode keeps only the goal term
	CHECK(compute_reward(Event::kNone, 0.5f, fwd, true) == 0.0f);
	CHECK(compute_reward(Event::kGoalReached, 0.5f, left, true) == 100.0f);
	CHECK(compute_reward(Event::kCollision, 0.0f, left, true) == 0.0f);
	// continuous commands carry no turn penalty
	CHECK(compute_reward(Event::kNone, 0.0f, Action::from_continuous(0.0f, 0.0f, 0.7f), false) == 0.0f);
}

TEST_CASE("curriculum update rule") {
	CHECK(update_difficulty(3.0f, Event::kGoalReached) == 4.0f);
	CHECK(update_difficulty(3.0f, Event::kCollision) == 2.0f);
	CHECK(update_difficulty(3.0f, Event::kTimeout) == 2.0f);
	CHECK(update_difficulty(0.0f, Event::kCollision) == 0.0f);
	CHECK(update_difficulty(20.0f, Event::kGoalReached, 20.0f) == 20.0f);
}

TEST_CASE("curriculum trace stays a clamped +-1 walk") {
	Rng rng(4);
	float d = 0.0f;
	for (int i = 0; i < 1000; ++i) {
		const Event e = rng.uniform() < 0.5f ? Event::kGoalReached : (rng.uniform() < 0.5f ? Event::kCollision : Event::kTimeout);
		const float next = update_difficulty(d, e, 20.0f);
		CHECK(std::abs(next - d) <= 1.0f);
		CHECK(next >= 0.0f);
		CHECK(next <= 20.0f);
		d = next;
	}
}

TEST_CASE("heuristic drives straight at the goal") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {0.0f, 0.0f};
	s.robot_heading = 0.0f;
	s.goal = {3.0f, 0.0f};
	Rng rng(0);
	Action a = heuristic_policy(s, 0.0f, rng);
	CHECK(a.cmd[0] == doctest::Approx(0.5f));
	CHECK(a.cmd[1] == 0.0f);
	CHECK(a.cmd[2] == doctest::Approx(0.0f));
}

TEST_CASE("heuristic turns left for a goal directly behind") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {0.0f, 0.0f};
	s.robot_heading = 0.0f;
	s.goal = {-3.0f, 0.0f};
	Rng rng(0);
	Action a = heuristic_policy(s, 0.0f, rng);
	CHECK(a.cmd[0] == 0.0f);
	CHECK(a.cmd[2] == doctest::Approx(0.75f));
}

TEST_CASE("heuristic noise is centered on the nominal command") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {0.0f, 0.0f};
	s.robot_heading = 0.0f;
	s.goal = {3.0f, 0.0f};
	Rng rng(12345);
	double sum[3] = {0, 0, 0};
	const int n = 1000;
	for (int i = 0; i < n; ++i) {
		Action a = heuristic_policy(s, 0.1f, rng);
		for (int k = 0; k < 3; ++k) sum[k] += a.cmd[k];
	}
	CHECK(std::abs(sum[0] / n - 0.5) < 0.02);
	CHECK(std::abs(sum[1] / n) < 0.02);
	CHECK(std::abs(sum[2] / n) < 0.02);
}

TEST_CASE("episode reward is bounded by 100 plus initial progress budget") {
	for (uint64_t seed = 0; seed < 10; ++seed) {
		SimState s = sim_reset(Scenario::kSimple, 2.0f, seed);
		const float budget = 100.0f + 0.1f * s.goal_distance();
		Rng rng(seed);
		float total = 0.0f;
		while (!s.done) {
			total += sim_step(s, heuristic_policy(s, 0.3f, rng)).reward;
		}
		CHECK(total <= budget + 1e-3f);
	}
}

TEST_CASE("identical action sequences give bit-identical trajectories") {
	auto run = [](uint64_t seed) {
		SimState s = sim_reset(Scenario::kSimple, 3.0f, seed);
		std::vector<float> trace;
		Rng arng(99);
		while (!s.done) {
			const int pick = arng.below(3);
			sim_step(s, Action::from_discrete(static_cast<DiscreteAction>(pick)));
			trace.push_back(s.robot_pos.x);
			trace.push_back(s.robot_pos.y);
			trace.push_back(s.robot_heading);
			for (const auto& p : s.pedestrians) {
				trace.push_back(p.position.x);
				trace.push_back(p.position.y);
			}
		}
		return trace;
	};
	CHECK(run(31) == run(31));
}

TEST_CASE("pedestrians never leave the arena") {
	SimState s = sim_reset(Scenario::kSimple, 6.0f, 77);
	const float half = s.config.arena_half_extent;
	Rng rng(1);
	for (int i = 0; i < 400 && !s.done; ++i) {
		sim_step(s, heuristic_policy(s, 0.3f, rng));
		for (const auto& p : s.pedestrians) {
			CHECK(std::abs(p.position.x) <= half);
			CHECK(std::abs(p.position.y) <= half);
		}
		if (s.done) break;
	}
}

TEST_CASE("goal vector is expressed in the robot frame") {
	SimState s = sim_reset(Scenario::kSimple, 0.0f, 5);
	s.robot_pos = {1.0f, 1.0f};
	s.robot_heading = 1.5707963f; // facing +y
	s.goal = {1.0f, 3.0f};        // 2 m ahead
	Vec2 v = s.goal_in_robot_frame();
	CHECK(v.x == doctest::Approx(2.0f));
	CHECK(v.y == doctest::Approx(0.0f).epsilon(1e-5));
}

TEST_CASE("negative difficulty is rejected") {
	CHECK_THROWS_AS(sim_reset(Scenario::kSimple, -1.0f, 0), SimError);
}
