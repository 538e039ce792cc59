#include "navmini/run_config.hpp"

#include <fstream>

#include "navmini/error.hpp"
#include "navmini/probe.hpp"

namespace navmini {

nlohmann::json default_run_config() {
	return nlohmann::json{
		{"seed", 0},
		{"threads", 1},
		{"scenario", "simple"},
		{"sim",
			{
				{"dt", 0.2},
				{"forward_speed", 0.5},
				{"turn_speed", 0.75},
				{"robot_radius", 0.3},
				{"pedestrian_radius", 0.3},
				{"goal_radius", 0.5},
				{"arena_size", 12.0},
				{"timeout_steps", 180},
				{"difficulty_max", 20.0},
				{"simple_reward", false},
			}},
		{"camera",
			{
				{"width", 64},
				{"height", 64},
				{"fov_deg", 90.0},
				{"eye_height", 0.6},
			}},
		{"collect",
			{
				{"scenario_set", "S"}, // S | SO | SOT
				{"episodes", 100},
				{"difficulty_schedule", nlohmann::json::array({0.0, 1.0, 2.0})},
				{"heuristic_noise", 0.3},
				{"store_ground_truth", false},
			}},
		{"wm",
			{
				{"variant", "transformer"},
				{"z_dim", 64},
				{"embed_dim", 64},
				{"layers", 4},
				{"heads", 4},
				{"context_len", 16},
				{"kappa", 0.001},
				{"reward_head", false},
				{"rssm_deter", 256},
				{"rssm_stoch", 32},
				{"rssm_hidden", 256},
				{"rssm_balance", 0.8},
				{"dataset", ""},
				{"val_fraction", 0.1},
				{"split_seed", 1234},
				{"train",
					{
						{"steps", 4000},
						{"batch_size", 8},
						{"lr", 0.001},
						{"val_interval", 200},
						{"val_windows", 64},
						{"log_interval", 10},
					}},
			}},
		{"ppo",
			{
				{"feature_source", "frozen-wm"}, // frozen-wm | end-to-end
				{"wm_checkpoint", ""},
				{"seeds", nlohmann::json::array({0})},
				{"total_steps", 150000},
				{"lr", 0.0003},
				{"clip", 0.2},
				{"gamma", 0.99},
				{"lambda", 0.95},
				{"epochs", 4},
				{"minibatch", 512},
				{"value_coef", 0.5},
				{"entropy_coef", 0.01},
				{"n_envs", 8},
				{"rollout_steps", 256},
				{"hidden", 256},
				{"seq_len", 1},
				{"start_difficulty", 0.0},
				{"fixed_difficulty", false},
				{"success_stop", -1.0},
			}},
		{"dreamer",
			{
				{"seeds", nlohmann::json::array({0})},
				{"total_env_steps", 60000},
				{"episodes_per_iter", 4},
				{"wm_steps_per_iter", 25},
				{"policy_updates_per_iter", 8},
				{"wm_batch_size", 8},
				{"wm_lr", 0.001},
				{"imagine_batch", 24},
				{"horizon", 15},
				{"imagine_context", 4},
				{"gamma", 0.99},
				{"lambda_ret", 0.95},
				{"entropy_coef", 0.003},
				{"actor_lr", 0.0003},
				{"critic_lr", 0.0003},
				{"replay_capacity", 400},
				{"start_difficulty", 0.0},
				{"fixed_difficulty", false},
				{"warm_start_wm", ""},
				{"hidden", 256},
			}},
		{"eval",
			{
				{"dataset", ""},
				{"wm_checkpoint", ""},
				{"policy_checkpoint", ""},
				{"context", 8},
				{"horizon", 8},
				{"max_windows", 256},
				{"episodes", 100},
				{"difficulty", 0.0},
				{"filmstrips", 4},
				{"use_validation_split", true},
			}},
		{"probe",
			{
				{"dataset", ""},
				{"wm_checkpoint", ""},
				{"e2e_checkpoint", ""},
				{"sources", nlohmann::json::array({"wm", "e2e", "random", "joint"})},
				{"steps", 1200},
				{"batch", 16},
				{"lr", 0.001},
				{"test_fraction", 0.2},
				{"feature_dim", 64},
			}},
		{"export",
			{
				{"steps", 16},
				{"difficulty", 2.0},
				{"heuristic_noise", 0.3},
			}},
	};
}

namespace {

bool same_kind(const nlohmann::json& a, const nlohmann::json& b) {
	if (a.is_number() && b.is_number()) return true;
	return a.type() == b.type();
}

void merge_into(nlohmann::json& base, const nlohmann::json& user, const std::string& prefix) {
	if (!user.is_object()) throw ConfigError("config section '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
	for (auto it = user.begin(); it != user.end(); ++it) {
		const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
		if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
		nlohmann::json& slot = base[it.key()];
		if (slot.is_object()) {
			merge_into(slot, it.value(), path);
		} else {
			if (!same_kind(slot, it.value())) {
				throw ConfigError("config key '" + path + "' has the wrong type (expected " + std::string(slot.type_name()) + ")");
			}
			slot = it.value();
		}
	}
}

} // namespace

nlohmann::json merge_run_config(const nlohmann::json& user) {
	nlohmann::json effective = default_run_config();
	merge_into(effective, user, "");
	return effective;
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
	const auto eq = assignment.find('=');
	if (eq == std::string::npos || eq == 0) {
		throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
	}
	const std::string path = assignment.substr(0, eq);
	const std::string raw = assignment.substr(eq + 1);
	nlohmann::json value;
	try {
		value = nlohmann::json::parse(raw);
	} catch (const nlohmann::json::exception&) {
		value = raw; // plain string
	}
	nlohmann::json* slot = &config;
	size_t start = 0;
	while (true) {
		const auto dot = path.find('.', start);
		const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
		if (key.empty()) throw ConfigError("bad override path '" + path + "'");
		if (dot == std::string::npos) {
			(*slot)[key] = value;
			break;
		}
		slot = &(*slot)[key];
		start = dot + 1;
	}
}

nlohmann::json load_config_file(const std::string& path) {
	std::ifstream f(path);
	if (!f) throw IoError("cannot open config file " + path);
	try {
		nlohmann::json j;
		f >> j;
		return j;
	} catch (const nlohmann::json::exception& ex) {
		throw ConfigError("config file " + path + " is not valid json: " + ex.what());
	}
}

SimConfig sim_config_from(const nlohmann::json& e) {
	const auto& s = e.at("sim");
	SimConfig c;
	c.dt = s.at("dt").get<float>();
	c.forward_speed = s.at("forward_speed").get<float>();
	c.turn_speed = s.at("turn_speed").get<float>();
	c.robot_radius = s.at("robot_radius").get<float>();
	c.pedestrian_radius = s.at("pedestrian_radius").get<float>();
	c.goal_radius = s.at("goal_radius").get<float>();
	c.arena_half_extent = s.at("arena_size").get<float>() * 0.5f;
	c.timeout_steps = s.at("timeout_steps").get<int>();
	c.difficulty_max = s.at("difficulty_max").get<float>();
	c.simple_reward = s.at("simple_reward").get<bool>();
	return c;
}

CameraModel camera_from(const nlohmann::json& e) {
	const auto& c = e.at("camera");
	CameraModel cam;
	cam.width = c.at("width").get<int>();
	cam.height = c.at("height").get<int>();
	cam.horizontal_fov = c.at("fov_deg").get<float>() * 3.14159265358979f / 180.0f;
	cam.eye_height = c.at("eye_height").get<float>();
	return cam;
}

EnvConfig env_config_from(const nlohmann::json& e) {
	EnvConfig env;
	env.scenario = scenario_from_string(e.at("scenario").get<std::string>());
	env.sim = sim_config_from(e);
	env.camera = camera_from(e);
	return env;
}

CollectConfig collect_config_from(const nlohmann::json& e) {
	const auto& c = e.at("collect");
	CollectConfig cc;
	cc.scenarios = scenario_set_from_name(c.at("scenario_set").get<std::string>());
	cc.episodes = c.at("episodes").get<int>();
	cc.difficulty_schedule = c.at("difficulty_schedule").get<std::vector<float>>();
	cc.heuristic_noise = c.at("heuristic_noise").get<float>();
	cc.store_ground_truth = c.at("store_ground_truth").get<bool>();
	cc.sim = sim_config_from(e);
	cc.camera = camera_from(e);
	return cc;
}

WorldModelConfig wm_config_from(const nlohmann::json& e) {
	const auto& w = e.at("wm");
	WorldModelConfig c;
	c.variant = w.at("variant").get<std::string>();
	c.z_dim = w.at("z_dim").get<int>();
	c.embed_dim = w.at("embed_dim").get<int>();
	c.layers = w.at("layers").get<int>();
	c.heads = w.at("heads").get<int>();
	c.context_len = w.at("context_len").get<int>();
	c.kappa = w.at("kappa").get<float>();
	c.reward_head = w.at("reward_head").get<bool>();
	c.rssm_deter = w.at("rssm_deter").get<int>();
	c.rssm_stoch = w.at("rssm_stoch").get<int>();
	c.rssm_hidden = w.at("rssm_hidden").get<int>();
	c.rssm_balance = w.at("rssm_balance").get<float>();
	c.image_h = e.at("camera").at("height").get<int>();
	c.image_w = e.at("camera").at("width").get<int>();
	c.validate();
	return c;
}

TrainWmConfig train_wm_config_from(const nlohmann::json& e) {
	const auto& t = e.at("wm").at("train");
	TrainWmConfig c;
	c.steps = t.at("steps").get<int>();
	c.batch_size = t.at("batch_size").get<int>();
	c.lr = t.at("lr").get<float>();
	c.val_interval = t.at("val_interval").get<int>();
	c.val_windows = t.at("val_windows").get<int>();
	c.log_interval = t.at("log_interval").get<int>();
	c.val_fraction = e.at("wm").at("val_fraction").get<float>();
	return c;
}

TrainPpoConfig train_ppo_config_from(const nlohmann::json& e) {
	const auto& p = e.at("ppo");
	TrainPpoConfig c;
	c.feature_source = p.at("feature_source").get<std::string>();
	c.total_steps = p.at("total_steps").get<int>();
	c.start_difficulty = p.at("start_difficulty").get<float>();
	c.fixed_difficulty = p.at("fixed_difficulty").get<bool>();
	c.success_stop = p.at("success_stop").get<float>();
	c.ppo.lr = p.at("lr").get<float>();
	c.ppo.clip = p.at("clip").get<float>();
	c.ppo.gamma = p.at("gamma").get<float>();
	c.ppo.lambda = p.at("lambda").get<float>();
	c.ppo.epochs = p.at("epochs").get<int>();
	c.ppo.minibatch = p.at("minibatch").get<int>();
	c.ppo.value_coef = p.at("value_coef").get<float>();
	c.ppo.entropy_coef = p.at("entropy_coef").get<float>();
	c.ppo.n_envs = p.at("n_envs").get<int>();
	c.ppo.rollout_steps = p.at("rollout_steps").get<int>();
	c.policy.hidden = p.at("hidden").get<int>();
	c.policy.seq_len = p.at("seq_len").get<int>();
	c.env = env_config_from(e);
	return c;
}

DreamerConfig dreamer_config_from(const nlohmann::json& e) {
	const auto& d = e.at("dreamer");
	DreamerConfig c;
	c.wm = wm_config_from(e);
	c.env = env_config_from(e);
	c.policy.hidden = d.at("hidden").get<int>();
	c.policy.feature_dim = c.wm.z_dim;
	c.total_env_steps = d.at("total_env_steps").get<int>();
	c.episodes_per_iter = d.at("episodes_per_iter").get<int>();
	c.wm_steps_per_iter = d.at("wm_steps_per_iter").get<int>();
	c.policy_updates_per_iter = d.at("policy_updates_per_iter").get<int>();
	c.wm_batch_size = d.at("wm_batch_size").get<int>();
	c.wm_lr = d.at("wm_lr").get<float>();
	c.imagine_batch = d.at("imagine_batch").get<int>();
	c.horizon = d.at("horizon").get<int>();
	c.imagine_context = d.at("imagine_context").get<int>();
	c.gamma = d.at("gamma").get<float>();
	c.lambda_ret = d.at("lambda_ret").get<float>();
	c.entropy_coef = d.at("entropy_coef").get<float>();
	c.actor_lr = d.at("actor_lr").get<float>();
	c.critic_lr = d.at("critic_lr").get<float>();
	c.replay_capacity = d.at("replay_capacity").get<int>();
	c.start_difficulty = d.at("start_difficulty").get<float>();
	c.fixed_difficulty = d.at("fixed_difficulty").get<bool>();
	c.warm_start_wm = d.at("warm_start_wm").get<std::string>();
	return c;
}

ProbeTrainConfig probe_train_config_from(const nlohmann::json& e) {
	const auto& p = e.at("probe");
	ProbeTrainConfig c;
	c.steps = p.at("steps").get<int>();
	c.batch = p.at("batch").get<int>();
	c.lr = p.at("lr").get<float>();
	c.test_fraction = p.at("test_fraction").get<float>();
	return c;
}

} // namespace navmini
