// navdreams-mini: crowd-navigation world-model sandbox.
// Subcommands cover the full workflow: collect datasets, train the world
// model / PPO / dreamer controllers, evaluate dreams and policies, run the
// latent probes, export rendered frames.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "navmini/dataset.hpp"
#include "navmini/dreamer.hpp"
#include "navmini/error.hpp"
#include "navmini/eval.hpp"
#include "navmini/image_io.hpp"
#include "navmini/probe.hpp"
#include "navmini/run_config.hpp"

using namespace navmini;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct RunContext {
	nlohmann::json effective;
	fs::path out;
	std::ofstream log;
	uint64_t seed = 0;

	void logline(const std::string& msg) {
		const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
		char buf[32];
		std::strftime(buf, sizeof(buf), "%F %T", std::localtime(&now));
		log << "[" << buf << "] " << msg << "\n";
		log.flush();
		std::cout << msg << "\n";
	}
};

RunContext make_context(const std::string& config_path, const std::string& out_dir, const std::vector<std::string>& overrides,
	int64_t seed_flag) {
	nlohmann::json user = config_path.empty() ? nlohmann::json::object() : load_config_file(config_path);
	for (const auto& o : overrides) apply_override(user, o);
	RunContext ctx;
	ctx.effective = merge_run_config(user);
	if (seed_flag >= 0) ctx.effective["seed"] = seed_flag;
	if (const char* cap = std::getenv("NAVDREAMS_MINI_THREADS")) {
		const int limit = std::atoi(cap);
		if (limit > 0 && ctx.effective["threads"].get<int>() > limit) ctx.effective["threads"] = limit;
	}
	ctx.seed = ctx.effective["seed"].get<uint64_t>();
	ctx.out = out_dir;
	fs::create_directories(ctx.out);
	{
		std::ofstream ec(ctx.out / "effective_config.json");
		if (!ec) throw IoError("cannot write effective config in " + out_dir);
		ec << ctx.effective.dump(2) << "\n";
	}
	ctx.log.open(ctx.out / "run.log", std::ios::app);
	if (!ctx.log) throw IoError("cannot open run log in " + out_dir);
	return ctx;
}

std::string require_path(const nlohmann::json& e, const char* section, const char* key) {
	const std::string v = e.at(section).at(key).get<std::string>();
	if (v.empty()) {
		throw ConfigError(std::string("config key '") + section + "." + key + "' is required for this command");
	}
	return v;
}

// ----- commands -----

void cmd_collect(RunContext& ctx) {
	CollectConfig cc = collect_config_from(ctx.effective);
	ctx.logline("collect: " + std::to_string(cc.episodes) + " episodes into " + ctx.out.string());
	DatasetManifest m = collect(cc, ctx.seed, ctx.out.string());
	int steps = 0;
	for (const auto& e : m.episodes) steps += e.length;
	ctx.logline("collect: wrote " + std::to_string(m.episodes.size()) + " episodes, " + std::to_string(steps) + " steps");
}

void cmd_train_wm(RunContext& ctx) {
	const std::string dataset_dir = require_path(ctx.effective, "wm", "dataset");
	WorldModelConfig wc = wm_config_from(ctx.effective);
	TrainWmConfig tc = train_wm_config_from(ctx.effective);
	Dataset full = Dataset::load(dataset_dir);
	auto [train_m, val_m] =
		split(full.manifest, ctx.effective["wm"]["val_fraction"].get<float>(), ctx.effective["wm"]["split_seed"].get<uint64_t>());
	Dataset train_set = Dataset::from_manifest(dataset_dir, train_m);
	Dataset val_set = Dataset::from_manifest(dataset_dir, val_m);
	ctx.logline("train-wm: " + wc.variant + ", " + std::to_string(train_set.episodes.size()) + " train / " +
		std::to_string(val_set.episodes.size()) + " val episodes, " + std::to_string(tc.steps) + " steps");
	WorldModel wm(wc, ctx.seed);
	const std::string base = (ctx.out / "wm").string();
	TrainWmResult r = train_wm(wm, train_set, val_set, tc, ctx.seed, base, (ctx.out / "loss_log.csv").string());
	ctx.logline("train-wm: best validation " + std::to_string(r.best_val) + " at step " + std::to_string(r.best_step));
	ctx.logline("train-wm: checkpoint at " + base + ".{json,bin,meta.json}");
}

void cmd_train_ppo(RunContext& ctx) {
	TrainPpoConfig tc = train_ppo_config_from(ctx.effective);
	std::unique_ptr<WorldModel> wm;
	if (tc.feature_source == "frozen-wm") {
		wm = std::make_unique<WorldModel>(WorldModel::load(require_path(ctx.effective, "ppo", "wm_checkpoint")));
		tc.policy.feature_dim = wm->config().feature_dim();
	} else {
		tc.policy.feature_dim = ctx.effective["wm"]["z_dim"].get<int>();
	}
	const auto seeds = ctx.effective["ppo"]["seeds"].get<std::vector<uint64_t>>();
	for (uint64_t s : seeds) {
		const std::string tag = "seed" + std::to_string(s);
		ctx.logline("train-ppo[" + tag + "]: " + tc.feature_source + ", " + std::to_string(tc.total_steps) + " env steps");
		TrainPpoResult r =
			train_ppo(wm.get(), tc, s, (ctx.out / ("policy_" + tag)).string(), (ctx.out / ("curve_" + tag + ".csv")).string());
		ctx.logline("train-ppo[" + tag + "]: success_rate_100ep " + std::to_string(r.final_success_rate) + ", mean difficulty " +
			std::to_string(r.final_mean_difficulty) + ", steps " + std::to_string(r.env_steps));
	}
}

void cmd_train_dreamer(RunContext& ctx) {
	DreamerConfig dc = dreamer_config_from(ctx.effective);
	const auto seeds = ctx.effective["dreamer"]["seeds"].get<std::vector<uint64_t>>();
	for (uint64_t s : seeds) {
		const std::string tag = "seed" + std::to_string(s);
		ctx.logline("train-dreamer[" + tag + "]: " + std::to_string(dc.total_env_steps) + " env steps");
		TrainDreamerResult r = train_dreamer(dc, s, (ctx.out / ("policy_" + tag)).string(), (ctx.out / ("wm_" + tag)).string(),
			(ctx.out / ("curve_" + tag + ".csv")).string());
		ctx.logline("train-dreamer[" + tag + "]: success_rate_100ep " + std::to_string(r.final_success_rate) + ", difficulty " +
			std::to_string(r.final_mean_difficulty));
	}
}

void cmd_eval_dream(RunContext& ctx) {
	const std::string dataset_dir = require_path(ctx.effective, "eval", "dataset");
	WorldModel wm = WorldModel::load(require_path(ctx.effective, "eval", "wm_checkpoint"));
	Dataset val = Dataset::load(dataset_dir);
	if (ctx.effective["eval"]["use_validation_split"].get<bool>()) {
		auto [train_m, val_m] = split(val.manifest, ctx.effective["wm"]["val_fraction"].get<float>(),
			ctx.effective["wm"]["split_seed"].get<uint64_t>());
		val = Dataset::from_manifest(dataset_dir, val_m);
	}
	const int context = ctx.effective["eval"]["context"].get<int>();
	const int horizon = ctx.effective["eval"]["horizon"].get<int>();
	const int max_windows = ctx.effective["eval"]["max_windows"].get<int>();
	ctx.logline("eval-dream: context " + std::to_string(context) + ", horizon " + std::to_string(horizon) + ", " +
		std::to_string(val.episodes.size()) + " validation episodes");
	DreamErrorCurve curve = nstep_dream_error(wm, val, context, horizon, max_windows);
	curve.save_csv((ctx.out / "dream_error.csv").string());
	nlohmann::json j{
		{"context", context},
		{"horizon", horizon},
		{"windows_used", curve.windows_used},
		{"windows_skipped", curve.windows_skipped},
		{"image_mse", curve.image_mse},
		{"vector_mse", curve.vector_mse},
		{"grey_image", curve.grey_image},
		{"grey_vector", curve.grey_vector},
		{"static_image", curve.static_image},
		{"static_vector", curve.static_vector},
	};
	std::ofstream(ctx.out / "dream_error.json") << j.dump(2) << "\n";

	const int strips = ctx.effective["eval"]["filmstrips"].get<int>();
	int written = 0;
	for (size_t e = 0; e < val.episodes.size() && written < strips; ++e) {
		const Episode& ep = val.episodes[e];
		if (ep.length < context + horizon) continue;
		char name[64];
		std::snprintf(name, sizeof(name), "filmstrip_%02d.png", written);
		save_dream_filmstrip(wm, ep, 0, context, horizon, (ctx.out / name).string());
		++written;
	}
	ctx.logline("eval-dream: 1-step image mse " + std::to_string(curve.image_mse[0]) + " (grey " +
		std::to_string(curve.grey_image[0]) + ", static " + std::to_string(curve.static_image[0]) + "), " +
		std::to_string(written) + " filmstrips");
}

void cmd_eval_policy(RunContext& ctx) {
	PolicyBundle bundle = PolicyBundle::load(require_path(ctx.effective, "eval", "policy_checkpoint"));
	std::unique_ptr<WorldModel> wm;
	if (bundle.feature_source == "frozen-wm") {
		wm = std::make_unique<WorldModel>(WorldModel::load(require_path(ctx.effective, "eval", "wm_checkpoint")));
	}
	EnvConfig env = env_config_from(ctx.effective);
	const float difficulty = ctx.effective["eval"]["difficulty"].get<float>();
	const int episodes = ctx.effective["eval"]["episodes"].get<int>();
	ctx.logline("eval-policy: " + std::to_string(episodes) + " episodes at difficulty " + std::to_string(difficulty));
	PolicyEvalResult r = evaluate_policy(bundle, wm.get(), env, difficulty, episodes, ctx.seed);
	r.save_csv((ctx.out / "episodes.csv").string());
	nlohmann::json j{{"success_rate", r.success_rate}, {"episodes", episodes}, {"difficulty", difficulty}, {"seed", ctx.seed}};
	std::ofstream(ctx.out / "eval.json") << j.dump(2) << "\n";
	ctx.logline("eval-policy: success rate " + std::to_string(r.success_rate));
}

void cmd_probe(RunContext& ctx) {
	const std::string dataset_dir = require_path(ctx.effective, "probe", "dataset");
	LabeledDataset labeled = LabeledDataset::load(dataset_dir);
	ProbeTrainConfig pc = probe_train_config_from(ctx.effective);
	const int feature_dim = ctx.effective["probe"]["feature_dim"].get<int>();
	const int image_h = labeled.height();

	std::vector<ProbeResult> results;
	std::deque<ParamSet> encoders; // stable addresses for the lambdas
	for (const std::string name : ctx.effective["probe"]["sources"].get<std::vector<std::string>>()) {
		ProbeSource source;
		source.name = name;
		if (name == "wm" || name == "e2e") {
			const char* key = name == "wm" ? "wm_checkpoint" : "e2e_checkpoint";
			encoders.push_back(load_checkpoint(require_path(ctx.effective, "probe", key)));
			ParamSet& ps = encoders.back();
			source.feature_dim = ps.get("enc.mu.b").numel();
			source.features = [&ps, image_h](const Tensor& im) {
				NoGradGuard ng;
				return image_encoder_forward(ps, image_h, im);
			};
		} else if (name == "random" || name == "joint") {
			encoders.emplace_back();
			ParamSet& enc = encoders.back();
			Rng rng(ctx.seed ^ (name == "joint" ? 0x7017ull : 0xf07aull));
			build_image_encoder(enc, image_h, feature_dim, rng);
			source.feature_dim = feature_dim;
			if (name == "joint") {
				source.trainable = &enc;
				source.features = [&enc, image_h](const Tensor& im) { return image_encoder_forward(enc, image_h, im); };
			} else {
				source.features = [&enc, image_h](const Tensor& im) {
					NoGradGuard ng;
					return image_encoder_forward(enc, image_h, im);
				};
			}
		} else {
			throw ConfigError("unknown probe source '" + name + "' (expected wm, e2e, random or joint)");
		}
		ctx.logline("probe[" + name + "]: training " + std::to_string(pc.steps) + " steps");
		ProbeResult r = probe(source, labeled, pc, ctx.seed + results.size());
		ctx.logline(
			"probe[" + name + "]: seg bce " + std::to_string(r.seg_bce) + ", depth prop mse " + std::to_string(r.depth_prop_mse));
		results.push_back(std::move(r));
	}

	std::ofstream csv(ctx.out / "probe_report.csv");
	csv << "source,seg_bce,depth_prop_mse,decoder_params\n";
	nlohmann::json j = nlohmann::json::array();
	for (const auto& r : results) {
		csv << r.source << "," << r.seg_bce << "," << r.depth_prop_mse << "," << r.decoder_params << "\n";
		j.push_back({{"source", r.source}, {"seg_bce", r.seg_bce}, {"depth_prop_mse", r.depth_prop_mse},
			{"decoder_params", r.decoder_params}});
	}
	std::ofstream(ctx.out / "probe_report.json") << j.dump(2) << "\n";
}

void cmd_export_frames(RunContext& ctx) {
	EnvConfig env_config = env_config_from(ctx.effective);
	Env env(env_config);
	const int steps = ctx.effective["export"]["steps"].get<int>();
	const float difficulty = ctx.effective["export"]["difficulty"].get<float>();
	const float noise = ctx.effective["export"]["heuristic_noise"].get<float>();
	env.reset(difficulty, ctx.seed);
	Rng rng(ctx.seed ^ 0xeeff00ull);
	ctx.logline("export-frames: " + std::to_string(steps) + " steps at difficulty " + std::to_string(difficulty));
	for (int t = 0; t < steps; ++t) {
		const Frame frame = env.render_full();
		char name[64];
		std::snprintf(name, sizeof(name), "frame_%04d", t);
		write_png((ctx.out / (std::string(name) + ".png")).string(), frame.height, frame.width, to_u8(frame.rgb));
		write_f32_blob((ctx.out / (std::string(name) + ".depth")).string(), frame.depth);
		write_u8_blob((ctx.out / (std::string(name) + ".labels")).string(), frame.labels);
		if (env.state().done) break;
		env.step(heuristic_policy(env.state(), noise, rng));
	}
}

} // namespace

int main(int argc, char** argv) {
	CLI::App app{"navdreams-mini: world-model crowd-navigation sandbox"};
	app.require_subcommand(1);

	std::string config_path;
	std::string out_dir = "out";
	std::vector<std::string> overrides;
	int64_t seed_flag = -1;
	app.add_option("--config", config_path, "json config file");
	app.add_option("--out", out_dir, "output directory");
	app.add_option("--seed", seed_flag, "master seed (overrides the config)");
	app.add_option("--set", overrides, "dotted config override, e.g. wm.kappa=0.001")->take_all();

	const std::map<std::string, std::function<void(RunContext&)>> handlers{
		{"collect", cmd_collect},
		{"train-wm", cmd_train_wm},
		{"train-ppo", cmd_train_ppo},
		{"train-dreamer", cmd_train_dreamer},
		{"eval-dream", cmd_eval_dream},
		{"eval-policy", cmd_eval_policy},
		{"probe", cmd_probe},
		{"export-frames", cmd_export_frames},
	};
	for (const auto& [name, fn] : handlers) {
		app.add_subcommand(name)->fallthrough();
	}

	CLI11_PARSE(app, argc, argv);
	const std::string command = app.get_subcommands().front()->get_name();

	try {
		RunContext ctx = make_context(config_path, out_dir, overrides, seed_flag);
		ctx.logline("command: " + command + " (seed " + std::to_string(ctx.seed) + ")");
		handlers.at(command)(ctx);
		ctx.logline("done");
		return kExitOk;
	} catch (const ConfigError& e) {
		std::cerr << "config error: " << e.what() << "\n";
		return kExitConfig;
	} catch (const IoError& e) {
		std::cerr << "io error: " << e.what() << "\n";
		return kExitIo;
	} catch (const NumericError& e) {
		std::cerr << "numeric error: " << e.what() << "\n";
		return kExitNumeric;
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << "\n";
		return kExitError;
	}
}
