#include "navmini/policy.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "navmini/error.hpp"
#include "navmini/ops.hpp"

namespace op = navmini::ops;

namespace navmini {

void build_policy_params(ParamSet& params, const PolicyConfig& config, Rng& rng) {
	const int in = config.input_dim();
	const int h = config.hidden;
	params.add_kaiming("pol.fc1.w", {in, h}, in, rng);
	params.add_zeros("pol.fc1.b", {h});
	params.add_kaiming("pol.fc2.w", {h, h}, h, rng);
	params.add_zeros("pol.fc2.b", {h});
	// small head init keeps the initial policy near uniform
	params.add_normal("pol.logits.w", {h, 3}, 0.01f, rng);
	params.add_zeros("pol.logits.b", {3});
	params.add_normal("pol.value.w", {h, 1}, 0.01f, rng);
	params.add_zeros("pol.value.b", {1});
}

PolicyOut policy_forward(const ParamSet& params, const PolicyConfig& config, const Tensor& input) {
	if (input.ndim() != 2 || input.dim(1) != config.input_dim()) {
		throw ShapeError("policy_forward: expected [N," + std::to_string(config.input_dim()) + "], got " + shape_str(input.shape()));
	}
	Tensor x = op::relu(op::dense(input, params.get("pol.fc1.w"), params.get("pol.fc1.b")));
	x = op::relu(op::dense(x, params.get("pol.fc2.w"), params.get("pol.fc2.b")));
	PolicyOut out;
	out.logits = op::dense(x, params.get("pol.logits.w"), params.get("pol.logits.b"));
	out.value = op::dense(x, params.get("pol.value.w"), params.get("pol.value.b"));
	return out;
}

std::vector<float> assemble_policy_input(
	const PolicyConfig& config, const std::deque<std::vector<float>>& history, const Vec2& goal_vec) {
	std::vector<float> input(static_cast<size_t>(config.input_dim()), 0.0f);
	// most recent feature occupies the last slot; older ones precede it,
	// missing steps stay zero
	const int k = config.seq_len;
	const int f = config.feature_dim;
	const int have = static_cast<int>(history.size());
	for (int slot = 0; slot < std::min(k, have); ++slot) {
		const auto& feat = history[static_cast<size_t>(have - 1 - slot)];
		if (static_cast<int>(feat.size()) != f) throw ShapeError("assemble_policy_input: feature width mismatch");
		std::copy(feat.begin(), feat.end(), input.begin() + static_cast<size_t>(k - 1 - slot) * f);
	}
	input[static_cast<size_t>(k * f)] = goal_vec.x;
	input[static_cast<size_t>(k * f) + 1] = goal_vec.y;
	return input;
}

int sample_action(const std::vector<float>& probs3, Rng& rng) {
	const float u = rng.uniform();
	float acc = 0.0f;
	for (int a = 0; a < 3; ++a) {
		acc += probs3[static_cast<size_t>(a)];
		if (u < acc) return a;
	}
	return 2;
}

int argmax_action(const float* logits3) {
	int best = 0;
	for (int a = 1; a < 3; ++a) {
		if (logits3[a] > logits3[best]) best = a;
	}
	return best;
}

GaeResult gae(const std::vector<float>& rewards, const std::vector<float>& values, const std::vector<uint8_t>& dones,
	float gamma, float lambda, float bootstrap_value) {
	const size_t n = rewards.size();
	if (values.size() != n || dones.size() != n) throw Error("gae: sequence lengths disagree");
	GaeResult out;
	out.advantages.assign(n, 0.0f);
	out.returns.assign(n, 0.0f);
	float last_adv = 0.0f;
	for (size_t i = n; i-- > 0;) {
		const float non_terminal = dones[i] ? 0.0f : 1.0f;
		const float next_value = (i + 1 < n) ? (dones[i] ? 0.0f : values[i + 1]) : non_terminal * bootstrap_value;
		const float delta = rewards[i] + gamma * next_value - values[i];
		last_adv = delta + gamma * lambda * non_terminal * last_adv;
		out.advantages[i] = last_adv;
		out.returns[i] = out.advantages[i] + values[i];
	}
	return out;
}

namespace {

Tensor minibatch_input_graph(const std::vector<Transition>& batch, const std::vector<int>& idx, const PolicyConfig& config,
	const ParamSet& params, std::optional<int> e2e_image_h) {
	const int m = static_cast<int>(idx.size());
	if (!e2e_image_h) {
		std::vector<float> data;
		data.reserve(static_cast<size_t>(m) * config.input_dim());
		for (int i : idx) {
			const auto& t = batch[static_cast<size_t>(i)];
			data.insert(data.end(), t.input.begin(), t.input.end());
		}
		return Tensor::from_data({m, config.input_dim()}, std::move(data));
	}
	// end-to-end: rebuild features with gradients through the encoder
	const int hh = *e2e_image_h;
	std::vector<const uint8_t*> ptrs;
	std::vector<float> vec_data;
	for (int i : idx) {
		const auto& t = batch[static_cast<size_t>(i)];
		ptrs.push_back(t.frame.data());
		vec_data.push_back(t.goal_vec[0]);
		vec_data.push_back(t.goal_vec[1]);
	}
	Tensor images = WorldModel::frames_to_tensor(ptrs, hh, hh);
	Tensor feats = image_encoder_forward(params, hh, images);
	Tensor vecs = Tensor::from_data({m, 2}, std::move(vec_data));
	return op::concat_cols({feats, vecs});
}

} // namespace

PpoStats ppo_update(std::vector<Transition>& batch, ParamSet& params, const PolicyConfig& config, const PpoConfig& ppo,
	Rng& rng, int& opt_step, std::optional<int> e2e_image_h) {
	const int n = static_cast<int>(batch.size());
	if (n == 0) throw Error("ppo_update: empty batch");

	// normalize advantages to mean 0, std 1 over the whole batch
	double mean = 0.0;
	for (const auto& t : batch) mean += t.advantage;
	mean /= n;
	double var = 0.0;
	for (const auto& t : batch) var += (t.advantage - mean) * (t.advantage - mean);
	const float std_dev = static_cast<float>(std::sqrt(var / n)) + 1e-8f;
	for (auto& t : batch) t.advantage = static_cast<float>((t.advantage - mean) / std_dev);

	std::vector<int> order(static_cast<size_t>(n));
	for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

	PpoStats stats;
	int stat_count = 0;
	for (int epoch = 0; epoch < ppo.epochs; ++epoch) {
		rng.shuffle(order);
		for (int start = 0; start < n; start += ppo.minibatch) {
			const int end = std::min(n, start + ppo.minibatch);
			std::vector<int> idx(order.begin() + start, order.begin() + end);
			const int m = static_cast<int>(idx.size());

			std::vector<int> actions;
			std::vector<float> old_lp, adv, ret;
			for (int i : idx) {
				const auto& t = batch[static_cast<size_t>(i)];
				actions.push_back(t.action);
				old_lp.push_back(t.log_prob);
				adv.push_back(t.advantage);
				ret.push_back(t.ret);
			}

			Tensor input = minibatch_input_graph(batch, idx, config, params, e2e_image_h);
			PolicyOut fwd = policy_forward(params, config, input);
			Tensor ls = op::log_softmax(fwd.logits);
			Tensor lp_new = op::select_per_row(ls, actions);
			Tensor ratio = op::exp_op(op::sub(lp_new, Tensor::from_data({m}, old_lp)));
			Tensor adv_t = Tensor::from_data({m}, adv);
			Tensor surr = op::minimum(op::mul(ratio, adv_t), op::mul(op::clamp(ratio, 1.0f - ppo.clip, 1.0f + ppo.clip), adv_t));
			Tensor policy_loss = op::scale(op::mean_all(surr), -1.0f);
			Tensor value_loss = op::mse(op::reshape(fwd.value, {m}), Tensor::from_data({m}, ret));
			// entropy = -sum p log p, averaged over the minibatch
			Tensor entropy = op::scale(op::sum_all(op::mul(op::exp_op(ls), ls)), -1.0f / static_cast<float>(m));
			Tensor loss =
				op::add(op::add(policy_loss, op::scale(value_loss, ppo.value_coef)), op::scale(entropy, -ppo.entropy_coef));

			params.zero_grad();
			loss.backward();
			opt_step += 1;
			adam_step(params, ppo.lr, opt_step);

			stats.policy_loss += policy_loss.item();
			stats.value_loss += value_loss.item();
			stats.entropy += entropy.item();
			++stat_count;
		}
	}
	if (stat_count > 0) {
		stats.policy_loss /= static_cast<float>(stat_count);
		stats.value_loss /= static_cast<float>(stat_count);
		stats.entropy /= static_cast<float>(stat_count);
	}
	return stats;
}

namespace {

// per-env rollout bookkeeping
struct EnvSlot {
	Env env;
	std::deque<std::vector<float>> history;
	Observation obs;
	float difficulty = 0.0f;
	int episode_steps = 0;

	explicit EnvSlot(const EnvConfig& config) : env(config) {}
};

std::vector<float> batch_row(const Tensor& batch, int row) {
	const int w = batch.dim(1);
	return std::vector<float>(
		batch.values().begin() + static_cast<size_t>(row) * w, batch.values().begin() + static_cast<size_t>(row + 1) * w);
}

} // namespace

TrainPpoResult train_ppo(const WorldModel* wm, const TrainPpoConfig& config, uint64_t seed, const std::string& ckpt_base,
	const std::string& curve_csv) {
	const bool e2e = config.feature_source == "end-to-end";
	if (!e2e && config.feature_source != "frozen-wm") {
		throw ConfigError("feature_source must be 'frozen-wm' or 'end-to-end', got '" + config.feature_source + "'");
	}
	if (!e2e && wm == nullptr) throw Error("train_ppo: frozen-wm mode needs a world-model checkpoint");
	if (e2e && config.policy.seq_len != 1) {
		throw ConfigError("sequence-input mode is only supported with frozen world-model features");
	}
	const int image_h = config.env.camera.height;
	if (!e2e && wm->config().image_h != image_h) {
		throw ConfigError("world model image size " + std::to_string(wm->config().image_h) + " != camera " + std::to_string(image_h));
	}

	TrainPpoResult result;
	result.wm_checksum_before = wm ? wm->params().checksum() : 0;

	Rng rng(seed);
	ParamSet params;
	if (e2e) build_image_encoder(params, image_h, config.policy.feature_dim, rng);
	build_policy_params(params, config.policy, rng);

	std::ofstream curve(curve_csv);
	if (!curve) throw IoError("train_ppo: cannot write " + curve_csv);
	curve << "env_steps,mean_difficulty,success_rate_100ep,seed\n";

	const int n_envs = config.ppo.n_envs;
	std::vector<EnvSlot> slots;
	slots.reserve(static_cast<size_t>(n_envs));
	for (int i = 0; i < n_envs; ++i) {
		slots.emplace_back(config.env);
		slots.back().difficulty = config.start_difficulty;
		slots.back().obs = slots.back().env.reset(slots.back().difficulty, rng.next_u32());
	}

	// outcome ring buffer for the success-rate-over-last-100-episodes metric
	std::deque<uint8_t> outcomes;
	auto success_rate = [&]() {
		if (outcomes.empty()) return 0.0f;
		int ok = 0;
		for (uint8_t o : outcomes) ok += o;
		return static_cast<float>(ok) / static_cast<float>(outcomes.size());
	};

	// batched feature extraction across envs
	auto encode_batch = [&](std::vector<const uint8_t*>& ptrs) {
		Tensor images = WorldModel::frames_to_tensor(ptrs, image_h, image_h);
		NoGradGuard ng;
		if (e2e) return image_encoder_forward(params, image_h, images);
		return wm->encode(images, nullptr).z;
	};

	int env_steps = 0;
	int opt_step = 0;
	int next_log = config.log_interval_steps;
	result.max_difficulty = config.start_difficulty;

	while (env_steps < config.total_steps) {
		std::vector<std::vector<Transition>> rollout(static_cast<size_t>(n_envs));
		std::vector<float> bootstrap(static_cast<size_t>(n_envs), 0.0f);
		for (int step = 0; step < config.ppo.rollout_steps; ++step) {
			std::vector<const uint8_t*> ptrs;
			for (auto& s : slots) ptrs.push_back(s.obs.rgb.data());
			Tensor z = encode_batch(ptrs);

			std::vector<float> input_data;
			for (int i = 0; i < n_envs; ++i) {
				auto& s = slots[static_cast<size_t>(i)];
				s.history.push_back(batch_row(z, i));
				while (static_cast<int>(s.history.size()) > config.policy.seq_len) s.history.pop_front();
				const auto in = assemble_policy_input(config.policy, s.history, s.obs.goal_vec);
				input_data.insert(input_data.end(), in.begin(), in.end());
			}
			Tensor input = Tensor::from_data({n_envs, config.policy.input_dim()}, input_data);
			Tensor logits, value, lp_all;
			{
				NoGradGuard ng;
				PolicyOut fwd = policy_forward(params, config.policy, input);
				logits = fwd.logits;
				value = fwd.value;
				lp_all = op::log_softmax(logits);
			}

			for (int i = 0; i < n_envs; ++i) {
				auto& s = slots[static_cast<size_t>(i)];
				std::vector<float> probs(3);
				double norm = 0.0;
				for (int a = 0; a < 3; ++a) {
					probs[static_cast<size_t>(a)] = std::exp(lp_all.values()[static_cast<size_t>(i) * 3 + a]);
					norm += probs[static_cast<size_t>(a)];
				}
				for (auto& p : probs) p = static_cast<float>(p / norm);
				const int action = sample_action(probs, rng);

				Transition tr;
				tr.input = std::vector<float>(input.values().begin() + static_cast<size_t>(i) * config.policy.input_dim(),
					input.values().begin() + static_cast<size_t>(i + 1) * config.policy.input_dim());
				if (e2e) tr.frame = s.obs.rgb;
				tr.goal_vec = {s.obs.goal_vec.x, s.obs.goal_vec.y};
				tr.action = action;
				tr.log_prob = lp_all.values()[static_cast<size_t>(i) * 3 + action];
				tr.value = value.values()[static_cast<size_t>(i)];

				auto res = s.env.step(Action::from_discrete(static_cast<DiscreteAction>(action), config.env.sim));
				tr.reward = res.outcome.reward;
				tr.done = res.outcome.done ? 1 : 0;
				rollout[static_cast<size_t>(i)].push_back(std::move(tr));
				s.obs = std::move(res.obs);
				s.episode_steps += 1;
				env_steps += 1;

				if (res.outcome.done) {
					outcomes.push_back(res.outcome.event == Event::kGoalReached ? 1 : 0);
					while (outcomes.size() > 100) outcomes.pop_front();
					if (!config.fixed_difficulty) {
						s.difficulty = update_difficulty(s.difficulty, res.outcome.event, config.env.sim.difficulty_max);
					}
					result.max_difficulty = std::max(result.max_difficulty, s.difficulty);
					s.obs = s.env.reset(s.difficulty, rng.next_u32());
					s.history.clear();
					s.episode_steps = 0;
				}
			}
		}

		// bootstrap values for unfinished episodes
		{
			std::vector<const uint8_t*> ptrs;
			for (auto& s : slots) ptrs.push_back(s.obs.rgb.data());
			Tensor z = encode_batch(ptrs);
			std::vector<float> input_data;
			for (int i = 0; i < n_envs; ++i) {
				auto& s = slots[static_cast<size_t>(i)];
				auto hist = s.history; // copy; the rollout continues next round
				hist.push_back(batch_row(z, i));
				while (static_cast<int>(hist.size()) > config.policy.seq_len) hist.pop_front();
				const auto in = assemble_policy_input(config.policy, hist, s.obs.goal_vec);
				input_data.insert(input_data.end(), in.begin(), in.end());
			}
			NoGradGuard ng;
			Tensor input = Tensor::from_data({n_envs, config.policy.input_dim()}, std::move(input_data));
			PolicyOut fwd = policy_forward(params, config.policy, input);
			for (int i = 0; i < n_envs; ++i) bootstrap[static_cast<size_t>(i)] = fwd.value.values()[static_cast<size_t>(i)];
		}

		std::vector<Transition> flat;
		for (int i = 0; i < n_envs; ++i) {
			auto& seq = rollout[static_cast<size_t>(i)];
			std::vector<float> rewards, values;
			std::vector<uint8_t> dones;
			for (const auto& t : seq) {
				rewards.push_back(t.reward);
				values.push_back(t.value);
				dones.push_back(t.done);
			}
			GaeResult g = gae(rewards, values, dones, config.ppo.gamma, config.ppo.lambda, bootstrap[static_cast<size_t>(i)]);
			for (size_t t = 0; t < seq.size(); ++t) {
				seq[t].advantage = g.advantages[t];
				seq[t].ret = g.returns[t];
				flat.push_back(std::move(seq[t]));
			}
		}
		ppo_update(flat, params, config.policy, config.ppo, rng, opt_step, e2e ? std::optional<int>(image_h) : std::nullopt);

		float mean_diff = 0.0f;
		for (const auto& s : slots) mean_diff += s.difficulty;
		mean_diff /= static_cast<float>(n_envs);
		if (env_steps >= next_log) {
			curve << env_steps << "," << mean_diff << "," << success_rate() << "," << seed << "\n";
			curve.flush();
			next_log += config.log_interval_steps;
		}
		result.final_mean_difficulty = mean_diff;
		result.final_success_rate = success_rate();

		if (config.success_stop > 0.0f && outcomes.size() >= 100 && success_rate() >= config.success_stop) {
			result.reached_stop = true;
			result.steps_to_stop = env_steps;
			break;
		}
	}

	result.env_steps = env_steps;
	result.wm_checksum_after = wm ? wm->params().checksum() : 0;

	PolicyBundle bundle;
	bundle.config = config.policy;
	bundle.feature_source = config.feature_source;
	bundle.image_h = image_h;
	bundle.params = std::move(params);
	bundle.save(ckpt_base);
	return result;
}

void PolicyBundle::save(const std::string& base_path) const {
	save_checkpoint(params, base_path);
	nlohmann::json j{
		{"feature_dim", config.feature_dim},
		{"seq_len", config.seq_len},
		{"hidden", config.hidden},
		{"feature_source", feature_source},
		{"image_h", image_h},
	};
	std::ofstream f(base_path + ".meta.json");
	if (!f) throw IoError("cannot write policy meta " + base_path + ".meta.json");
	f << j.dump(2) << "\n";
}

PolicyBundle PolicyBundle::load(const std::string& base_path) {
	std::ifstream f(base_path + ".meta.json");
	if (!f) throw IoError("cannot open policy meta " + base_path + ".meta.json");
	nlohmann::json j;
	try {
		f >> j;
	} catch (const nlohmann::json::exception& ex) {
		throw IoError("bad policy meta: " + std::string(ex.what()));
	}
	PolicyBundle b;
	b.config.feature_dim = j.value("feature_dim", 64);
	b.config.seq_len = j.value("seq_len", 1);
	b.config.hidden = j.value("hidden", 256);
	b.feature_source = j.value("feature_source", "frozen-wm");
	b.image_h = j.value("image_h", 0);
	b.params = load_checkpoint(base_path);
	return b;
}

} // namespace navmini
