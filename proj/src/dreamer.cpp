#include "navmini/dreamer.hpp"

#include <cmath>
#include <deque>
#include <fstream>

#include "navmini/error.hpp"
#include "navmini/ops.hpp"

namespace op = navmini::ops;

namespace navmini {

namespace {

// Batched open-loop transformer rollout state (decode/encode across the
// whole batch at once; per-sequence attention windows).
struct BatchedDreamState {
	int batch = 0;
	int context_len = 0;
	int z_dim = 0;
	std::vector<std::vector<std::vector<float>>> zs; // [b][t][z]
	std::vector<std::vector<std::array<float, 3>>> as;
	std::vector<std::vector<std::array<float, 2>>> vs;
};

std::vector<float> tensor_row(const Tensor& t, int row) {
	const int w = t.dim(1);
	return std::vector<float>(
		t.values().begin() + static_cast<size_t>(row) * w, t.values().begin() + static_cast<size_t>(row + 1) * w);
}

} // namespace

std::vector<float> lambda_returns(
	const std::vector<float>& rewards, const std::vector<float>& values, float bootstrap, float gamma, float lambda) {
	const size_t h = rewards.size();
	if (values.size() != h) throw Error("lambda_returns: sequence lengths disagree");
	std::vector<float> ret(h, 0.0f);
	float next = bootstrap;
	for (size_t t = h; t-- > 0;) {
		const float next_value = (t + 1 < h) ? values[t + 1] : bootstrap;
		next = rewards[t] + gamma * ((1.0f - lambda) * next_value + lambda * next);
		ret[t] = next;
	}
	return ret;
}

ImaginedBatch imagine_rollout(const WorldModel& wm, const ParamSet& actor, const PolicyConfig& policy_config,
	const ParamSet& critic, const Dataset& starts, int batch, int horizon, int context, Rng& rng) {
	if (horizon < 1) throw Error("imagine_rollout: horizon must be >= 1");
	if (!wm.config().reward_head) throw Error("imagine_rollout: world model has no reward head");
	if (starts.episodes.empty()) throw Error("imagine_rollout: empty start dataset");
	const auto& cfg = wm.config();
	const int zd = cfg.z_dim;

	// sample start windows with at least `context` real steps
	std::vector<std::pair<const Episode*, int>> picks;
	for (int i = 0; i < batch; ++i) {
		for (int tries = 0; tries < 100; ++tries) {
			const Episode& ep = starts.episodes[static_cast<size_t>(rng.below(static_cast<int>(starts.episodes.size())))];
			if (ep.length < context + 1) continue;
			const int s = rng.below(ep.length - context);
			picks.push_back({&ep, s});
			break;
		}
	}
	if (static_cast<int>(picks.size()) != batch) throw Error("imagine_rollout: episodes too short for the context");

	BatchedDreamState st;
	st.batch = batch;
	st.context_len = cfg.context_len;
	st.z_dim = zd;
	st.zs.resize(static_cast<size_t>(batch));
	st.as.resize(static_cast<size_t>(batch));
	st.vs.resize(static_cast<size_t>(batch));
	{
		NoGradGuard ng;
		std::vector<const uint8_t*> ptrs;
		for (const auto& [ep, s] : picks) {
			for (int t = 0; t < context; ++t) ptrs.push_back(ep->frame(s + t));
		}
		Tensor images = WorldModel::frames_to_tensor(ptrs, cfg.image_h, cfg.image_w);
		Tensor z = wm.encode(images, nullptr).z;
		for (int b = 0; b < batch; ++b) {
			const auto& [ep, s] = picks[static_cast<size_t>(b)];
			for (int t = 0; t < context; ++t) {
				st.zs[static_cast<size_t>(b)].push_back(tensor_row(z, b * context + t));
				const auto v = ep->vec(s + t);
				st.vs[static_cast<size_t>(b)].push_back({v[0], v[1]});
				if (t + 1 < context) st.as[static_cast<size_t>(b)].push_back(ep->action(s + t));
			}
		}
	}

	ImaginedBatch out;
	out.horizon = horizon;
	out.batch = batch;
	out.steps.resize(static_cast<size_t>(horizon) * batch);

	for (int h = 0; h < horizon; ++h) {
		// policy over the current features (graph through the actor only)
		std::vector<float> input_data;
		for (int b = 0; b < batch; ++b) {
			const auto& z_cur = st.zs[static_cast<size_t>(b)].back();
			const auto& v_cur = st.vs[static_cast<size_t>(b)].back();
			std::deque<std::vector<float>> hist{z_cur};
			const auto in = assemble_policy_input(policy_config, hist, {v_cur[0], v_cur[1]});
			input_data.insert(input_data.end(), in.begin(), in.end());
		}
		Tensor input = Tensor::from_data({batch, policy_config.input_dim()}, input_data);
		PolicyOut fwd = policy_forward(actor, policy_config, input);
		Tensor ls = op::log_softmax(fwd.logits);

		std::vector<int> actions(static_cast<size_t>(batch));
		for (int b = 0; b < batch; ++b) {
			std::vector<float> probs(3);
			for (int a = 0; a < 3; ++a) probs[static_cast<size_t>(a)] = std::exp(ls.values()[static_cast<size_t>(b) * 3 + a]);
			actions[static_cast<size_t>(b)] = sample_action(probs, rng);
		}
		out.log_probs.push_back(op::select_per_row(ls, actions));
		out.entropies.push_back(op::scale(op::sum_all(op::mul(op::exp_op(ls), ls)), -1.0f / static_cast<float>(batch)));

		// world-model transition on the mapped continuous commands
		NoGradGuard ng;
		std::vector<Tensor> h_rows;
		std::vector<float> z_data;
		for (int b = 0; b < batch; ++b) {
			const auto cmd = map_action(static_cast<DiscreteAction>(actions[static_cast<size_t>(b)]));
			st.as[static_cast<size_t>(b)].push_back(cmd);
			auto& zs = st.zs[static_cast<size_t>(b)];
			auto& as = st.as[static_cast<size_t>(b)];
			auto& vs = st.vs[static_cast<size_t>(b)];
			const int n = static_cast<int>(zs.size());
			const int t0 = std::max(0, n - cfg.context_len);
			const int t = n - t0;
			std::vector<float> zrow, arow, vrow;
			for (int i = t0; i < n; ++i) {
				zrow.insert(zrow.end(), zs[static_cast<size_t>(i)].begin(), zs[static_cast<size_t>(i)].end());
				arow.insert(arow.end(), as[static_cast<size_t>(i)].begin(), as[static_cast<size_t>(i)].end());
				vrow.insert(vrow.end(), vs[static_cast<size_t>(i)].begin(), vs[static_cast<size_t>(i)].end());
			}
			Tensor h_seq = wm.predict_transformer(Tensor::from_data({t, zd}, std::move(zrow)),
				Tensor::from_data({t, 3}, std::move(arow)), Tensor::from_data({t, 2}, std::move(vrow)));
			h_rows.push_back(op::slice_rows(h_seq, t - 1, t));
			z_data.insert(z_data.end(), zs.back().begin(), zs.back().end());
		}
		Tensor h_stack = op::concat_rows(h_rows);
		Tensor z_stack = Tensor::from_data({batch, zd}, std::move(z_data));
		Tensor rewards = wm.reward_from(h_stack, z_stack);
		WorldModel::Decoded dec = wm.decode(h_stack);
		Tensor z_next = wm.encode(dec.image, nullptr).z;

		for (int b = 0; b < batch; ++b) {
			ImaginedStep& step = out.steps[static_cast<size_t>(h) * batch + b];
			step.feature = st.zs[static_cast<size_t>(b)].back();
			const auto& v_cur = st.vs[static_cast<size_t>(b)].back();
			step.goal_vec = v_cur;
			step.action = actions[static_cast<size_t>(b)];
			step.cmd = map_action(static_cast<DiscreteAction>(actions[static_cast<size_t>(b)]));
			step.reward = rewards.values()[static_cast<size_t>(b)];
			st.zs[static_cast<size_t>(b)].push_back(tensor_row(z_next, b));
			st.vs[static_cast<size_t>(b)].push_back({dec.vec.values()[static_cast<size_t>(b) * 2],
				dec.vec.values()[static_cast<size_t>(b) * 2 + 1]});
		}
	}

	// critic values over imagined states plus the bootstrap state
	{
		NoGradGuard ng;
		std::vector<float> input_data;
		for (int h = 0; h < horizon; ++h) {
			for (int b = 0; b < batch; ++b) {
				const ImaginedStep& step = out.steps[static_cast<size_t>(h) * batch + b];
				std::deque<std::vector<float>> hist{step.feature};
				const auto in = assemble_policy_input(policy_config, hist, {step.goal_vec[0], step.goal_vec[1]});
				input_data.insert(input_data.end(), in.begin(), in.end());
			}
		}
		for (int b = 0; b < batch; ++b) {
			std::deque<std::vector<float>> hist{st.zs[static_cast<size_t>(b)].back()};
			const auto& v = st.vs[static_cast<size_t>(b)].back();
			const auto in = assemble_policy_input(policy_config, hist, {v[0], v[1]});
			input_data.insert(input_data.end(), in.begin(), in.end());
		}
		Tensor input = Tensor::from_data({(horizon + 1) * batch, policy_config.input_dim()}, std::move(input_data));
		Tensor values = policy_forward(critic, policy_config, input).value;
		for (int h = 0; h < horizon; ++h) {
			for (int b = 0; b < batch; ++b) {
				out.steps[static_cast<size_t>(h) * batch + b].value = values.values()[static_cast<size_t>(h) * batch + b];
			}
		}
		out.bootstrap_values.resize(static_cast<size_t>(batch));
		for (int b = 0; b < batch; ++b) {
			out.bootstrap_values[static_cast<size_t>(b)] = values.values()[static_cast<size_t>(horizon) * batch + b];
		}
	}
	return out;
}

DreamerUpdateStats dreamer_update(ImaginedBatch& batch, ParamSet& actor, const PolicyConfig& policy_config, ParamSet& critic,
	float gamma, float lambda, float entropy_coef, float actor_lr, float critic_lr, int& actor_step, int& critic_step) {
	const int h = batch.horizon;
	const int b = batch.batch;
	if (h < 1 || b < 1) throw Error("dreamer_update: empty imagined batch");

	// lambda-returns per sequence
	for (int i = 0; i < b; ++i) {
		std::vector<float> rewards, values;
		for (int t = 0; t < h; ++t) {
			rewards.push_back(batch.steps[static_cast<size_t>(t) * b + i].reward);
			values.push_back(batch.steps[static_cast<size_t>(t) * b + i].value);
		}
		const auto ret = lambda_returns(rewards, values, batch.bootstrap_values[static_cast<size_t>(i)], gamma, lambda);
		for (int t = 0; t < h; ++t) batch.steps[static_cast<size_t>(t) * b + i].lambda_return = ret[static_cast<size_t>(t)];
	}

	DreamerUpdateStats stats;
	double ret_acc = 0.0;
	for (const auto& s : batch.steps) ret_acc += s.lambda_return;
	stats.mean_return = static_cast<float>(ret_acc / batch.steps.size());

	// actor: reinforce on (lambda_return - value), plus entropy bonus
	{
		Tensor loss;
		for (int t = 0; t < h; ++t) {
			std::vector<float> adv(static_cast<size_t>(b));
			for (int i = 0; i < b; ++i) {
				const auto& s = batch.steps[static_cast<size_t>(t) * b + i];
				adv[static_cast<size_t>(i)] = s.lambda_return - s.value;
			}
			Tensor term = op::scale(op::sum_all(op::mul(batch.log_probs[static_cast<size_t>(t)],
									   Tensor::from_data({b}, std::move(adv)))),
				-1.0f / static_cast<float>(h * b));
			Tensor ent = op::scale(batch.entropies[static_cast<size_t>(t)], -entropy_coef / static_cast<float>(h));
			Tensor step_loss = op::add(term, ent);
			loss = loss.defined() ? op::add(loss, step_loss) : step_loss;
		}
		actor.zero_grad();
		loss.backward();
		actor_step += 1;
		adam_step(actor, actor_lr, actor_step);
		stats.actor_loss = loss.item();
	}

	// critic: regression to the lambda-returns
	{
		std::vector<float> input_data, targets;
		for (const auto& s : batch.steps) {
			std::deque<std::vector<float>> hist{s.feature};
			const auto in = assemble_policy_input(policy_config, hist, {s.goal_vec[0], s.goal_vec[1]});
			input_data.insert(input_data.end(), in.begin(), in.end());
			targets.push_back(s.lambda_return);
		}
		const int n = static_cast<int>(batch.steps.size());
		Tensor input = Tensor::from_data({n, policy_config.input_dim()}, std::move(input_data));
		Tensor value = policy_forward(critic, policy_config, input).value;
		Tensor loss = op::mse(op::reshape(value, {n}), Tensor::from_data({n}, std::move(targets)));
		critic.zero_grad();
		loss.backward();
		critic_step += 1;
		adam_step(critic, critic_lr, critic_step);
		stats.critic_loss = loss.item();
	}
	return stats;
}

TrainDreamerResult train_dreamer(const DreamerConfig& config, uint64_t seed, const std::string& policy_ckpt_base,
	const std::string& wm_ckpt_base, const std::string& curve_csv) {
	Rng rng(seed);

	WorldModelConfig wm_config = config.wm;
	wm_config.reward_head = true;
	WorldModel wm = config.warm_start_wm.empty()
		? WorldModel(wm_config, rng.next_u32())
		: [&] {
			  WorldModel loaded = WorldModel::load(config.warm_start_wm);
			  if (!loaded.config().reward_head) {
				  // extend the pretrained model with a fresh reward head
				  WorldModelConfig c = loaded.config();
				  c.reward_head = true;
				  WorldModel fresh(c, rng.next_u32());
				  for (auto& [name, e] : fresh.params().entries_mut()) {
					  if (loaded.params().contains(name)) e.param.values_mut() = loaded.params().get(name).values();
				  }
				  return fresh;
			  }
			  return loaded;
		  }();
	if (wm.config().variant != "transformer") throw ConfigError("train_dreamer supports the transformer world model");

	ParamSet actor, critic;
	build_policy_params(actor, config.policy, rng);
	build_policy_params(critic, config.policy, rng);

	std::ofstream curve(curve_csv);
	if (!curve) throw IoError("train_dreamer: cannot write " + curve_csv);
	curve << "env_steps,mean_difficulty,success_rate_100ep,seed\n";

	Dataset replay;
	replay.manifest.height = config.env.camera.height;
	replay.manifest.width = config.env.camera.width;

	std::deque<uint8_t> outcomes;
	auto success_rate = [&]() {
		if (outcomes.empty()) return 0.0f;
		int ok = 0;
		for (uint8_t o : outcomes) ok += o;
		return static_cast<float>(ok) / static_cast<float>(outcomes.size());
	};

	TrainDreamerResult result;
	float difficulty = config.start_difficulty;
	result.max_difficulty = difficulty;
	int env_steps = 0;
	int wm_step = 0, actor_step = 0, critic_step = 0;
	int next_log = config.log_interval_steps;
	Env env(config.env);
	const int image_h = config.env.camera.height;

	while (env_steps < config.total_env_steps) {
		// ---- collect with the current policy (stochastic actions) ----
		for (int e = 0; e < config.episodes_per_iter; ++e) {
			Observation obs = env.reset(difficulty, rng.next_u32());
			Episode ep;
			ep.height = obs.height;
			ep.width = obs.width;
			ep.scenario = config.env.scenario;
			ep.difficulty = difficulty;
			bool done = false;
			Event last_event = Event::kNone;
			while (!done) {
				NoGradGuard ng;
				std::vector<const uint8_t*> ptr{obs.rgb.data()};
				Tensor images = WorldModel::frames_to_tensor(ptr, image_h, image_h);
				Tensor z = wm.encode(images, nullptr).z;
				std::deque<std::vector<float>> hist{z.values()};
				const auto in = assemble_policy_input(config.policy, hist, obs.goal_vec);
				PolicyOut fwd = policy_forward(actor, config.policy, Tensor::from_data({1, config.policy.input_dim()}, in));
				Tensor ls = op::log_softmax(fwd.logits);
				std::vector<float> probs(3);
				for (int a = 0; a < 3; ++a) probs[static_cast<size_t>(a)] = std::exp(ls.values()[static_cast<size_t>(a)]);
				const int action = sample_action(probs, rng);

				const Action act = Action::from_discrete(static_cast<DiscreteAction>(action), config.env.sim);
				auto res = env.step(act);
				ep.frames.insert(ep.frames.end(), obs.rgb.begin(), obs.rgb.end());
				ep.vectors.push_back(obs.goal_vec.x);
				ep.vectors.push_back(obs.goal_vec.y);
				ep.actions.insert(ep.actions.end(), act.cmd.begin(), act.cmd.end());
				ep.rewards.push_back(res.outcome.reward);
				ep.dones.push_back(res.outcome.done ? 1 : 0);
				ep.length += 1;
				env_steps += 1;
				obs = std::move(res.obs);
				done = res.outcome.done;
				last_event = res.outcome.event;
			}
			outcomes.push_back(last_event == Event::kGoalReached ? 1 : 0);
			while (outcomes.size() > 100) outcomes.pop_front();
			if (!config.fixed_difficulty) {
				difficulty = update_difficulty(difficulty, last_event, config.env.sim.difficulty_max);
			}
			result.max_difficulty = std::max(result.max_difficulty, difficulty);
			if (ep.length >= 2) {
				replay.episodes.push_back(std::move(ep));
				if (static_cast<int>(replay.episodes.size()) > config.replay_capacity) replay.episodes.erase(replay.episodes.begin());
			}
		}

		// ---- world-model updates on replay windows ----
		{
			std::vector<SeqWindow> windows;
			const int k = wm.config().context_len;
			std::vector<std::pair<const Episode*, int>> index;
			for (const auto& ep : replay.episodes) {
				if (ep.length < k) continue;
				for (int s = 0; s + k <= ep.length; ++s) index.push_back({&ep, s});
			}
			if (!index.empty()) {
				for (int it = 0; it < config.wm_steps_per_iter; ++it) {
					windows.clear();
					for (int i = 0; i < config.wm_batch_size; ++i) {
						const auto& [ep, s] = index[static_cast<size_t>(rng.below(static_cast<int>(index.size())))];
						windows.push_back({ep, s, k});
					}
					wm.params().zero_grad();
					WmLossParts parts = wm.loss(windows, &rng);
					parts.total.backward();
					wm_step += 1;
					adam_step(wm.params(), config.wm_lr, wm_step);
				}
			}
		}

		// ---- imagination + actor-critic updates ----
		if (!replay.episodes.empty()) {
			bool long_enough = false;
			for (const auto& ep : replay.episodes) long_enough |= ep.length >= config.imagine_context + 1;
			if (long_enough) {
				for (int u = 0; u < config.policy_updates_per_iter; ++u) {
					ImaginedBatch ib = imagine_rollout(
						wm, actor, config.policy, critic, replay, config.imagine_batch, config.horizon, config.imagine_context, rng);
					dreamer_update(ib, actor, config.policy, critic, config.gamma, config.lambda_ret, config.entropy_coef,
						config.actor_lr, config.critic_lr, actor_step, critic_step);
				}
			}
		}

		result.final_success_rate = success_rate();
		result.final_mean_difficulty = difficulty;
		if (env_steps >= next_log) {
			curve << env_steps << "," << difficulty << "," << success_rate() << "," << seed << "\n";
			curve.flush();
			next_log += config.log_interval_steps;
		}
	}

	result.env_steps = env_steps;
	wm.save(wm_ckpt_base);
	PolicyBundle bundle;
	bundle.config = config.policy;
	bundle.feature_source = "frozen-wm";
	bundle.image_h = image_h;
	bundle.params = std::move(actor);
	bundle.save(policy_ckpt_base);
	return result;
}

} // namespace navmini
