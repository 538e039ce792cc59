#include "navmini/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "navmini/error.hpp"
#include "navmini/image_io.hpp"

namespace fs = std::filesystem;

namespace navmini {

void DatasetManifest::save(const std::string& dir) const {
	nlohmann::json j;
	j["format"] = "navmini-dataset";
	j["version"] = version;
	j["height"] = height;
	j["width"] = width;
	j["has_ground_truth"] = has_ground_truth;
	nlohmann::json eps = nlohmann::json::array();
	for (const auto& e : episodes) {
		eps.push_back({{"file", e.file}, {"length", e.length}, {"scenario", e.scenario}, {"seed", e.seed},
			{"difficulty", e.difficulty}, {"bytes", e.bytes}});
	}
	j["episodes"] = eps;
	std::ofstream f(fs::path(dir) / "manifest.json");
	if (!f) throw IoError("cannot write manifest in " + dir);
	f << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& dir) {
	std::ifstream f(fs::path(dir) / "manifest.json");
	if (!f) throw IoError("no manifest.json in " + dir);
	nlohmann::json j;
	try {
		f >> j;
	} catch (const nlohmann::json::exception& ex) {
		throw IoError("bad manifest.json in " + dir + ": " + ex.what());
	}
	if (j.value("format", "") != "navmini-dataset") throw IoError("not a dataset manifest: " + dir);
	DatasetManifest m;
	m.version = j.value("version", 1);
	m.height = j.value("height", 0);
	m.width = j.value("width", 0);
	m.has_ground_truth = j.value("has_ground_truth", false);
	for (const auto& e : j["episodes"]) {
		ManifestEntry entry;
		entry.file = e["file"].get<std::string>();
		entry.length = e["length"].get<int>();
		entry.scenario = e["scenario"].get<std::string>();
		entry.seed = e["seed"].get<uint64_t>();
		entry.difficulty = e["difficulty"].get<float>();
		entry.bytes = e["bytes"].get<uint64_t>();
		const fs::path p = fs::path(dir) / entry.file;
		if (!fs::exists(p)) throw IoError("manifest lists missing file " + p.string());
		if (fs::file_size(p) != entry.bytes) {
			throw IoError("size mismatch for " + p.string() + ": manifest says " + std::to_string(entry.bytes) + ", file has " +
				std::to_string(fs::file_size(p)));
		}
		m.episodes.push_back(std::move(entry));
	}
	return m;
}

std::vector<Scenario> scenario_set_from_name(const std::string& name) {
	if (name == "S") return {Scenario::kSimple};
	if (name == "SO") return {Scenario::kSimple, Scenario::kOffice};
	if (name == "SOT") return {Scenario::kSimple, Scenario::kOffice, Scenario::kTextured};
	throw ConfigError("unknown scenario set '" + name + "' (expected S, SO or SOT)");
}

namespace {

std::string episode_filename(int index) {
	char buf[32];
	std::snprintf(buf, sizeof(buf), "ep_%05d.bin", index);
	return buf;
}

} // namespace

DatasetManifest collect(const CollectConfig& config, uint64_t seed, const std::string& out_dir, const ActionSource& source) {
	if (config.episodes < 1) throw Error("collect: episodes must be >= 1");
	if (config.scenarios.empty()) throw Error("collect: scenario set is empty");
	if (config.difficulty_schedule.empty()) throw Error("collect: difficulty schedule is empty");
	std::error_code ec;
	fs::create_directories(out_dir, ec);

	Rng master(seed);
	DatasetManifest manifest;
	manifest.height = config.camera.height;
	manifest.width = config.camera.width;
	manifest.has_ground_truth = config.store_ground_truth;

	try {
		for (int i = 0; i < config.episodes; ++i) {
			const Scenario scenario = config.scenarios[static_cast<size_t>(master.below(static_cast<int>(config.scenarios.size())))];
			const float difficulty =
				config.difficulty_schedule[static_cast<size_t>(master.below(static_cast<int>(config.difficulty_schedule.size())))];
			const uint64_t base_seed = (static_cast<uint64_t>(master.next_u32()) << 32) | master.next_u32();

			// rare 1-step episodes (instant collision) violate the T >= 2
			// invariant; retry with a derived seed
			Episode ep;
			std::vector<float> depth_gt;
			std::vector<uint8_t> label_gt;
			uint64_t ep_seed = 0;
			for (int attempt = 0; attempt < 100; ++attempt) {
				ep_seed = base_seed + static_cast<uint64_t>(attempt) * 0x9e3779b9ull;
				EnvConfig env_config;
				env_config.scenario = scenario;
				env_config.sim = config.sim;
				env_config.camera = config.camera;
				Env env(env_config);
				Observation obs = env.reset(difficulty, ep_seed);
				Rng policy_rng(ep_seed ^ 0xda7a5e7ull);

				ep = Episode{};
				ep.height = obs.height;
				ep.width = obs.width;
				ep.scenario = scenario;
				ep.seed = ep_seed;
				ep.difficulty = difficulty;
				depth_gt.clear();
				label_gt.clear();

				bool done = false;
				while (!done) {
					if (config.store_ground_truth) {
						const Frame full = env.render_full();
						depth_gt.insert(depth_gt.end(), full.depth.begin(), full.depth.end());
						label_gt.insert(label_gt.end(), full.labels.begin(), full.labels.end());
					}
					const Action action = source ? source(env, obs, policy_rng)
												 : heuristic_policy(env.state(), config.heuristic_noise, policy_rng);
					auto result = env.step(action);
					ep.frames.insert(ep.frames.end(), obs.rgb.begin(), obs.rgb.end());
					ep.vectors.push_back(obs.goal_vec.x);
					ep.vectors.push_back(obs.goal_vec.y);
					ep.actions.insert(ep.actions.end(), action.cmd.begin(), action.cmd.end());
					ep.rewards.push_back(result.outcome.reward);
					ep.dones.push_back(result.outcome.done ? 1 : 0);
					ep.length += 1;
					obs = std::move(result.obs);
					done = result.outcome.done;
				}
				if (ep.length >= 2) break;
			}
			if (ep.length < 2) throw Error("collect: could not produce an episode of length >= 2");

			const std::string file = episode_filename(i);
			save_episode(ep, (fs::path(out_dir) / file).string());
			if (config.store_ground_truth) {
				write_f32_blob((fs::path(out_dir) / (file + ".depth")).string(), depth_gt);
				write_u8_blob((fs::path(out_dir) / (file + ".labels")).string(), label_gt);
			}
			ManifestEntry entry;
			entry.file = file;
			entry.length = ep.length;
			entry.scenario = scenario_name(scenario);
			entry.seed = ep_seed;
			entry.difficulty = difficulty;
			entry.bytes = ep.file_bytes();
			manifest.episodes.push_back(std::move(entry));
		}
	} catch (...) {
		// partial datasets are useless: remove what was written
		for (const auto& e : manifest.episodes) {
			fs::remove(fs::path(out_dir) / e.file, ec);
			fs::remove(fs::path(out_dir) / (e.file + ".depth"), ec);
			fs::remove(fs::path(out_dir) / (e.file + ".labels"), ec);
		}
		throw;
	}

	manifest.save(out_dir);
	return manifest;
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest, float validation_fraction, uint64_t seed) {
	if (!(validation_fraction > 0.0f && validation_fraction < 1.0f)) {
		throw Error("split: validation fraction must be in (0, 1)");
	}
	const int n = static_cast<int>(manifest.episodes.size());
	if (n < 2) throw Error("split: need at least 2 episodes, got " + std::to_string(n));
	std::vector<int> order(static_cast<size_t>(n));
	for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
	Rng rng(seed);
	rng.shuffle(order);
	int n_val = static_cast<int>(std::lround(static_cast<double>(n) * validation_fraction));
	n_val = std::clamp(n_val, 1, n - 1);

	DatasetManifest train = manifest;
	DatasetManifest val = manifest;
	train.episodes.clear();
	val.episodes.clear();
	for (int i = 0; i < n; ++i) {
		const auto& e = manifest.episodes[static_cast<size_t>(order[static_cast<size_t>(i)])];
		if (i < n_val) {
			val.episodes.push_back(e);
		} else {
			train.episodes.push_back(e);
		}
	}
	return {train, val};
}

Dataset Dataset::load(const std::string& dir) { return from_manifest(dir, DatasetManifest::load(dir)); }

Dataset Dataset::from_manifest(const std::string& dir, const DatasetManifest& manifest) {
	Dataset d;
	d.manifest = manifest;
	d.episodes.reserve(manifest.episodes.size());
	for (const auto& e : manifest.episodes) {
		Episode ep = load_episode((fs::path(dir) / e.file).string());
		ep.scenario = scenario_from_string(e.scenario);
		ep.seed = e.seed;
		ep.difficulty = e.difficulty;
		if (ep.length != e.length) {
			throw IoError("episode length mismatch for " + e.file + ": manifest says " + std::to_string(e.length));
		}
		d.episodes.push_back(std::move(ep));
	}
	return d;
}

int Dataset::total_steps() const {
	int n = 0;
	for (const auto& e : episodes) n += e.length;
	return n;
}

} // namespace navmini
