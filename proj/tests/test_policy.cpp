#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "navmini/dreamer.hpp"
#include "navmini/error.hpp"
#include "navmini/ops.hpp"
#include "navmini/policy.hpp"

using namespace navmini;
namespace op = navmini::ops;
namespace fs = std::filesystem;

namespace {

PolicyConfig tiny_policy(int feature_dim = 8, int seq_len = 1) {
	PolicyConfig c;
	c.feature_dim = feature_dim;
	c.seq_len = seq_len;
	c.hidden = 16;
	return c;
}

Transition make_transition(Rng& rng, const PolicyConfig& config) {
	Transition t;
	t.input.resize(static_cast<size_t>(config.input_dim()));
	for (auto& v : t.input) v = rng.uniform(-1.0f, 1.0f);
	t.action = rng.below(3);
	t.reward = rng.uniform(-1.0f, 1.0f);
	t.value = rng.uniform(-1.0f, 1.0f);
	t.advantage = rng.uniform(-1.0f, 1.0f);
	t.ret = rng.uniform(-1.0f, 1.0f);
	return t;
}

} // namespace

TEST_CASE("zero-weight head gives uniform action probabilities") {
	PolicyConfig c = tiny_policy();
	ParamSet ps;
	Rng rng(1);
	build_policy_params(ps, c, rng);
	for (auto& v : ps.get("pol.logits.w").values_mut()) v = 0.0f;
	for (auto& v : ps.get("pol.logits.b").values_mut()) v = 0.0f;
	Tensor input = Tensor::full({2, c.input_dim()}, 0.4f);
	PolicyOut out = policy_forward(ps, c, input);
	Tensor probs = op::softmax(out.logits);
	for (float p : probs.values()) CHECK(p == doctest::Approx(1.0f / 3.0f).epsilon(1e-5));
}

TEST_CASE("argmax is invariant to a constant logit shift") {
	float logits[3] = {0.3f, -0.2f, 0.1f};
	float shifted[3] = {10.3f, 9.8f, 10.1f};
	CHECK(argmax_action(logits) == argmax_action(shifted));
	CHECK(argmax_action(logits) == 0);
}

TEST_CASE("test-mode action is deterministic per checkpoint and input") {
	PolicyConfig c = tiny_policy();
	ParamSet ps;
	Rng rng(7);
	build_policy_params(ps, c, rng);
	Tensor input = Tensor::zeros({1, c.input_dim()});
	Rng data(3);
	for (auto& v : input.values_mut()) v = data.uniform(-1.0f, 1.0f);
	PolicyOut a = policy_forward(ps, c, input);
	PolicyOut b = policy_forward(ps, c, input);
	CHECK(a.logits.values() == b.logits.values());
	CHECK(argmax_action(a.logits.values().data()) == argmax_action(b.logits.values().data()));
}

TEST_CASE("gae terminal one-step") {
	GaeResult g = gae({1.0f}, {0.0f}, {1}, 0.99f, 0.95f, 5.0f);
	CHECK(g.advantages[0] == doctest::Approx(1.0f));
	CHECK(g.returns[0] == doctest::Approx(1.0f));
}

TEST_CASE("gae zero rewards and values give zero advantages") {
	GaeResult g = gae({0.0f, 0.0f, 0.0f}, {0.0f, 0.0f, 0.0f}, {0, 0, 0}, 0.99f, 0.95f, 0.0f);
	for (float a : g.advantages) CHECK(a == 0.0f);
}

TEST_CASE("gae telescopes with gamma = lambda = 1") {
	GaeResult g = gae({0.0f, 0.0f, 1.0f}, {0.0f, 0.0f, 0.0f}, {0, 0, 1}, 1.0f, 1.0f, 0.0f);
	CHECK(g.advantages[0] == doctest::Approx(1.0f));
	CHECK(g.advantages[1] == doctest::Approx(1.0f));
	CHECK(g.advantages[2] == doctest::Approx(1.0f));
}

TEST_CASE("gae bootstrap is ignored after a terminal step") {
	GaeResult done = gae({1.0f}, {0.5f}, {1}, 0.9f, 0.9f, 100.0f);
	CHECK(done.advantages[0] == doctest::Approx(0.5f)); // 1 - 0.5, no bootstrap
	GaeResult open = gae({1.0f}, {0.5f}, {0}, 0.9f, 0.9f, 100.0f);
	CHECK(open.advantages[0] == doctest::Approx(1.0f + 0.9f * 100.0f - 0.5f));
}

TEST_CASE("clipped surrogate picks the clipped ratio") {
	// single transition: advantage +1, ratio 1.5, clip 0.2 -> 1.2
	Tensor ratio = Tensor::from_data({1}, {1.5f});
	Tensor adv = Tensor::from_data({1}, {1.0f});
	Tensor surr = op::minimum(op::mul(ratio, adv), op::mul(op::clamp(ratio, 0.8f, 1.2f), adv));
	CHECK(surr.values()[0] == doctest::Approx(1.2f));
	// negative advantage keeps the unclipped (more pessimistic) branch
	Tensor adv_n = Tensor::from_data({1}, {-1.0f});
	Tensor surr_n = op::minimum(op::mul(ratio, adv_n), op::mul(op::clamp(ratio, 0.8f, 1.2f), adv_n));
	CHECK(surr_n.values()[0] == doctest::Approx(-1.5f));
}

TEST_CASE("zero advantages yield a zero surrogate gradient") {
	PolicyConfig c = tiny_policy();
	ParamSet ps;
	Rng rng(11);
	build_policy_params(ps, c, rng);
	Tensor input = Tensor::zeros({4, c.input_dim()});
	for (auto& v : input.values_mut()) v = rng.uniform(-1.0f, 1.0f);
	PolicyOut out = policy_forward(ps, c, input);
	Tensor ls = op::log_softmax(out.logits);
	Tensor lp = op::select_per_row(ls, {0, 1, 2, 0});
	Tensor ratio = op::exp_op(op::sub(lp, op::detach(lp)));
	Tensor adv = Tensor::zeros({4});
	Tensor surr = op::minimum(op::mul(ratio, adv), op::mul(op::clamp(ratio, 0.8f, 1.2f), adv));
	ps.zero_grad();
	op::scale(op::mean_all(surr), -1.0f).backward();
	for (const auto& [name, e] : ps.entries()) {
		for (float g : e.param.grad()) CHECK(g == 0.0f);
	}
}

TEST_CASE("ppo first-epoch ratio is one, so the surrogate vanishes after normalization") {
	PolicyConfig c = tiny_policy();
	ParamSet ps;
	Rng rng(13);
	build_policy_params(ps, c, rng);
	std::vector<Transition> batch;
	for (int i = 0; i < 32; ++i) batch.push_back(make_transition(rng, c));
	// log-probs consistent with the current parameters
	for (auto& t : batch) {
		NoGradGuard ng;
		PolicyOut out = policy_forward(ps, c, Tensor::from_data({1, c.input_dim()}, t.input));
		t.log_prob = op::log_softmax(out.logits).values()[static_cast<size_t>(t.action)];
	}
	PpoConfig ppo;
	ppo.epochs = 1;
	ppo.minibatch = 32; // single minibatch: ratios stay exactly 1
	int step = 0;
	PpoStats stats = ppo_update(batch, ps, c, ppo, rng, step);
	CHECK(std::abs(stats.policy_loss) < 1e-5f);

	// advantage normalization left the batch at mean 0, std 1
	double mean = 0.0;
	for (const auto& t : batch) mean += t.advantage;
	mean /= batch.size();
	double var = 0.0;
	for (const auto& t : batch) var += (t.advantage - mean) * (t.advantage - mean);
	CHECK(std::abs(mean) <= 1e-6);
	CHECK(std::sqrt(var / batch.size()) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("sequence mode input assembly") {
	PolicyConfig c = tiny_policy(4, 10);
	CHECK(c.input_dim() == 42);
	// spec arithmetic at full scale: 10 * 64 + 2
	PolicyConfig full = tiny_policy(64, 10);
	CHECK(full.input_dim() == 642);

	std::deque<std::vector<float>> history;
	for (int i = 0; i < 3; ++i) history.push_back(std::vector<float>(4, static_cast<float>(i + 1)));
	auto in = assemble_policy_input(c, history, {9.0f, -9.0f});
	// 7 zero-padded slots, then features 1,2,3, then the goal vector
	for (int slot = 0; slot < 7; ++slot) {
		for (int d = 0; d < 4; ++d) CHECK(in[static_cast<size_t>(slot * 4 + d)] == 0.0f);
	}
	for (int slot = 7; slot < 10; ++slot) {
		for (int d = 0; d < 4; ++d) CHECK(in[static_cast<size_t>(slot * 4 + d)] == static_cast<float>(slot - 6));
	}
	CHECK(in[40] == 9.0f);
	CHECK(in[41] == -9.0f);

	// k = 1 reduces to the plain controller input
	PolicyConfig k1 = tiny_policy(4, 1);
	std::deque<std::vector<float>> h1{{1.0f, 2.0f, 3.0f, 4.0f}};
	auto in1 = assemble_policy_input(k1, h1, {5.0f, 6.0f});
	CHECK(in1 == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f});
}

TEST_CASE("lambda returns hand sum") {
	// constant reward 1, gamma = lambda = 1, horizon 3, terminal value 0
	auto ret = lambda_returns({1.0f, 1.0f, 1.0f}, {0.0f, 0.0f, 0.0f}, 0.0f, 1.0f, 1.0f);
	CHECK(ret[0] == doctest::Approx(3.0f));
	CHECK(ret[1] == doctest::Approx(2.0f));
	CHECK(ret[2] == doctest::Approx(1.0f));
}

TEST_CASE("value regression converges to a constant target") {
	PolicyConfig c = tiny_policy();
	ParamSet critic;
	Rng rng(17);
	build_policy_params(critic, c, rng);
	Tensor input = Tensor::zeros({8, c.input_dim()});
	for (auto& v : input.values_mut()) v = rng.uniform(-1.0f, 1.0f);
	Tensor target = Tensor::full({8}, 3.0f);
	int step = 0;
	for (int i = 0; i < 400; ++i) {
		critic.zero_grad();
		Tensor value = op::reshape(policy_forward(critic, c, input).value, {8});
		op::mse(value, target).backward();
		adam_step(critic, 1e-2f, ++step);
	}
	NoGradGuard ng;
	Tensor value = policy_forward(critic, c, input).value;
	for (float v : value.values()) CHECK(v == doctest::Approx(3.0f).epsilon(0.03));
}

TEST_CASE("frozen world model is untouched by ppo training") {
	WorldModelConfig wc;
	wc.z_dim = 8;
	wc.embed_dim = 8;
	wc.layers = 1;
	wc.heads = 2;
	wc.context_len = 4;
	wc.image_h = 16;
	wc.image_w = 16;
	WorldModel wm(wc, 23);

	TrainPpoConfig tc;
	tc.policy = tiny_policy(8, 1);
	tc.env.scenario = Scenario::kSimple;
	tc.env.camera.width = 16;
	tc.env.camera.height = 16;
	tc.feature_source = "frozen-wm";
	tc.total_steps = 256;
	tc.ppo.n_envs = 2;
	tc.ppo.rollout_steps = 64;
	tc.ppo.minibatch = 64;
	tc.ppo.epochs = 2;
	const std::string base = (fs::temp_directory_path() / "navmini_ppo_ckpt").string();
	const std::string csv = (fs::temp_directory_path() / "navmini_ppo_curve.csv").string();
	TrainPpoResult r = train_ppo(&wm, tc, 3, base, csv);
	CHECK(r.wm_checksum_before == r.wm_checksum_after);
	CHECK(r.env_steps >= 256);
	CHECK(fs::exists(base + ".bin"));
	CHECK(fs::exists(csv));

	PolicyBundle back = PolicyBundle::load(base);
	CHECK(back.feature_source == "frozen-wm");
	CHECK(back.config.feature_dim == 8);
	fs::remove(base + ".json");
	fs::remove(base + ".bin");
	fs::remove(base + ".meta.json");
	fs::remove(csv);
}

TEST_CASE("end-to-end mode trains its own encoder") {
	TrainPpoConfig tc;
	tc.policy = tiny_policy(8, 1);
	tc.env.camera.width = 16;
	tc.env.camera.height = 16;
	tc.feature_source = "end-to-end";
	tc.total_steps = 128;
	tc.ppo.n_envs = 2;
	tc.ppo.rollout_steps = 64;
	tc.ppo.minibatch = 128;
	tc.ppo.epochs = 1;
	const std::string base = (fs::temp_directory_path() / "navmini_e2e_ckpt").string();
	const std::string csv = (fs::temp_directory_path() / "navmini_e2e_curve.csv").string();
	TrainPpoResult r = train_ppo(nullptr, tc, 5, base, csv);
	CHECK(r.env_steps >= 128);
	PolicyBundle back = PolicyBundle::load(base);
	CHECK(back.params.contains("enc.mu.w"));
	CHECK(back.params.contains("pol.fc1.w"));
	fs::remove(base + ".json");
	fs::remove(base + ".bin");
	fs::remove(base + ".meta.json");
	fs::remove(csv);
}

TEST_CASE("sequence input demands frozen features") {
	TrainPpoConfig tc;
	tc.policy = tiny_policy(8, 10);
	tc.feature_source = "end-to-end";
	CHECK_THROWS_AS(train_ppo(nullptr, tc, 1, "/tmp/x", "/tmp/y.csv"), ConfigError);
}

TEST_CASE("imagination produces one transition per start state at horizon one") {
	WorldModelConfig wc;
	wc.z_dim = 8;
	wc.embed_dim = 8;
	wc.layers = 1;
	wc.heads = 2;
	wc.context_len = 4;
	wc.image_h = 8;
	wc.image_w = 8;
	wc.reward_head = true;
	WorldModel wm(wc, 29);
	PolicyConfig pc = tiny_policy(8, 1);
	ParamSet actor, critic;
	Rng rng(31);
	build_policy_params(actor, pc, rng);
	build_policy_params(critic, pc, rng);

	Dataset starts;
	starts.manifest.height = 8;
	starts.manifest.width = 8;
	{
		Episode ep;
		ep.length = 8;
		ep.height = 8;
		ep.width = 8;
		Rng erng(5);
		ep.frames.resize(static_cast<size_t>(8) * 8 * 8 * 3);
		for (auto& b : ep.frames) b = static_cast<uint8_t>(erng.below(256));
		for (int i = 0; i < 8; ++i) {
			ep.vectors.push_back(erng.uniform(-3.0f, 3.0f));
			ep.vectors.push_back(erng.uniform(-3.0f, 3.0f));
			ep.actions.push_back(0.5f);
			ep.actions.push_back(0.0f);
			ep.actions.push_back(0.0f);
			ep.rewards.push_back(0.1f);
			ep.dones.push_back(i == 7 ? 1 : 0);
		}
		starts.episodes.push_back(std::move(ep));
	}

	Rng r1(7);
	ImaginedBatch one = imagine_rollout(wm, actor, pc, critic, starts, 3, 1, 2, r1);
	CHECK(one.horizon == 1);
	CHECK(one.steps.size() == 3);
	// continuous commands always come from the discrete action map
	for (const auto& s : one.steps) {
		CHECK(s.cmd == map_action(static_cast<DiscreteAction>(s.action)));
	}
	// determinism per seed
	Rng r2(7);
	ImaginedBatch again = imagine_rollout(wm, actor, pc, critic, starts, 3, 1, 2, r2);
	for (size_t i = 0; i < one.steps.size(); ++i) {
		CHECK(one.steps[i].action == again.steps[i].action);
		CHECK(one.steps[i].reward == again.steps[i].reward);
	}
	CHECK_THROWS_AS(imagine_rollout(wm, actor, pc, critic, starts, 3, 0, 2, r1), Error);
}

TEST_CASE("zero reward head propagates zero lambda returns") {
	WorldModelConfig wc;
	wc.z_dim = 8;
	wc.embed_dim = 8;
	wc.layers = 1;
	wc.heads = 2;
	wc.context_len = 4;
	wc.image_h = 8;
	wc.image_w = 8;
	wc.reward_head = true;
	WorldModel wm(wc, 29);
	for (auto& v : wm.params().get("rew.fc2.w").values_mut()) v = 0.0f;
	for (auto& v : wm.params().get("rew.fc2.b").values_mut()) v = 0.0f;

	PolicyConfig pc = tiny_policy(8, 1);
	ParamSet actor, critic;
	Rng rng(31);
	build_policy_params(actor, pc, rng);
	build_policy_params(critic, pc, rng);
	// zero critic output too, so returns collapse entirely
	for (auto& v : critic.get("pol.value.w").values_mut()) v = 0.0f;
	for (auto& v : critic.get("pol.value.b").values_mut()) v = 0.0f;

	Dataset starts;
	starts.manifest.height = 8;
	starts.manifest.width = 8;
	{
		Episode ep;
		ep.length = 6;
		ep.height = 8;
		ep.width = 8;
		ep.frames.assign(static_cast<size_t>(6) * 8 * 8 * 3, 100);
		for (int i = 0; i < 6; ++i) {
			ep.vectors.push_back(1.0f);
			ep.vectors.push_back(0.0f);
			ep.actions.push_back(0.5f);
			ep.actions.push_back(0.0f);
			ep.actions.push_back(0.0f);
			ep.rewards.push_back(0.0f);
			ep.dones.push_back(i == 5 ? 1 : 0);
		}
		starts.episodes.push_back(std::move(ep));
	}
	Rng r(9);
	ImaginedBatch ib = imagine_rollout(wm, actor, pc, critic, starts, 2, 3, 2, r);
	for (const auto& s : ib.steps) CHECK(s.reward == 0.0f);
	int actor_step = 0, critic_step = 0;
	DreamerUpdateStats stats = dreamer_update(ib, actor, pc, critic, 0.99f, 0.95f, 0.003f, 3e-4f, 3e-4f, actor_step, critic_step);
	CHECK(stats.mean_return == 0.0f);
}

TEST_CASE("zero advantages leave only the entropy term in the actor loss") {
	PolicyConfig pc = tiny_policy(4, 1);
	ParamSet actor, critic;
	Rng rng(41);
	build_policy_params(actor, pc, rng);
	build_policy_params(critic, pc, rng);

	// hand-built imagined batch: rewards 0, values 0, bootstrap 0
	ImaginedBatch ib;
	ib.horizon = 2;
	ib.batch = 3;
	ib.steps.resize(6);
	for (auto& s : ib.steps) {
		s.feature = {0.1f, -0.2f, 0.3f, 0.0f};
		s.goal_vec = {1.0f, 0.5f};
		s.reward = 0.0f;
		s.value = 0.0f;
	}
	ib.bootstrap_values = {0.0f, 0.0f, 0.0f};
	std::vector<float> entropy_values;
	for (int t = 0; t < 2; ++t) {
		std::vector<float> input_data;
		for (int b = 0; b < 3; ++b) {
			std::deque<std::vector<float>> hist{ib.steps[static_cast<size_t>(t) * 3 + b].feature};
			auto in = assemble_policy_input(pc, hist, {1.0f, 0.5f});
			input_data.insert(input_data.end(), in.begin(), in.end());
		}
		PolicyOut fwd = policy_forward(actor, pc, Tensor::from_data({3, pc.input_dim()}, input_data));
		Tensor ls = op::log_softmax(fwd.logits);
		ib.log_probs.push_back(op::select_per_row(ls, {0, 1, 2}));
		Tensor ent = op::scale(op::sum_all(op::mul(op::exp_op(ls), ls)), -1.0f / 3.0f);
		entropy_values.push_back(ent.item());
		ib.entropies.push_back(ent);
	}
	int a_step = 0, c_step = 0;
	DreamerUpdateStats stats = dreamer_update(ib, actor, pc, critic, 0.99f, 0.95f, 0.003f, 3e-4f, 3e-4f, a_step, c_step);
	const float expected = -0.003f * (entropy_values[0] + entropy_values[1]) / 2.0f;
	CHECK(stats.actor_loss == doctest::Approx(expected).epsilon(1e-4));
}
