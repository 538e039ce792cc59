#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "navmini/dataset.hpp"
#include "navmini/error.hpp"

using namespace navmini;
namespace fs = std::filesystem;

namespace {

Episode tiny_episode(int t = 4, int h = 8, int w = 8) {
	Episode ep;
	ep.length = t;
	ep.height = h;
	ep.width = w;
	Rng rng(5);
	ep.frames.resize(static_cast<size_t>(t) * h * w * 3);
	for (auto& b : ep.frames) b = static_cast<uint8_t>(rng.below(256));
	for (int i = 0; i < t; ++i) {
		ep.vectors.push_back(rng.uniform(-5.0f, 5.0f));
		ep.vectors.push_back(rng.uniform(-5.0f, 5.0f));
		ep.actions.push_back(rng.uniform(0.0f, 1.0f));
		ep.actions.push_back(rng.uniform(-0.5f, 0.5f));
		ep.actions.push_back(rng.uniform(-0.75f, 0.75f));
		ep.rewards.push_back(rng.uniform(-1.0f, 1.0f));
		ep.dones.push_back(0);
	}
	ep.dones.back() = 1;
	return ep;
}

struct TempDir {
	fs::path path;
	explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
		fs::remove_all(path);
		fs::create_directories(path);
	}
	~TempDir() { fs::remove_all(path); }
};

CollectConfig small_collect_config() {
	CollectConfig c;
	c.episodes = 6;
	c.scenarios = {Scenario::kSimple};
	c.difficulty_schedule = {0.0f, 1.0f};
	c.camera.width = 16;
	c.camera.height = 16;
	return c;
}

} // namespace

TEST_CASE("episode round-trip is field-exact") {
	TempDir dir("navmini_ep_rt");
	Episode ep = tiny_episode();
	const std::string path = (dir.path / "ep.bin").string();
	save_episode(ep, path);
	Episode back = load_episode(path);
	CHECK(back.length == ep.length);
	CHECK(back.height == ep.height);
	CHECK(back.width == ep.width);
	CHECK(back.frames == ep.frames);
	CHECK(back.vectors == ep.vectors);
	CHECK(back.actions == ep.actions);
	CHECK(back.rewards == ep.rewards);
	CHECK(back.dones == ep.dones);
	CHECK(fs::file_size(path) == ep.file_bytes());
}

TEST_CASE("minimal two-step episode round-trips") {
	TempDir dir("navmini_ep_t2");
	Episode ep = tiny_episode(2);
	const std::string path = (dir.path / "ep.bin").string();
	save_episode(ep, path);
	CHECK(load_episode(path).length == 2);
}

TEST_CASE("corrupt magic is rejected") {
	TempDir dir("navmini_ep_magic");
	Episode ep = tiny_episode();
	const std::string path = (dir.path / "ep.bin").string();
	save_episode(ep, path);
	{
		std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
		f.write("XXXX", 4);
	}
	CHECK_THROWS_AS(load_episode(path), IoError);
}

TEST_CASE("truncated file is rejected with an offset") {
	TempDir dir("navmini_ep_trunc");
	Episode ep = tiny_episode();
	const std::string path = (dir.path / "ep.bin").string();
	save_episode(ep, path);
	fs::resize_file(path, fs::file_size(path) - 10);
	try {
		load_episode(path);
		FAIL("expected IoError");
	} catch (const IoError& e) {
		CHECK(std::string(e.what()).find("offset") != std::string::npos);
	}
}

TEST_CASE("episodes shorter than two steps are invalid") {
	Episode ep = tiny_episode(2);
	ep.length = 1;
	ep.frames.resize(ep.frame_bytes());
	ep.vectors.resize(2);
	ep.actions.resize(3);
	ep.rewards.resize(1);
	ep.dones = {1};
	CHECK_THROWS_AS(ep.validate(), Error);
}

TEST_CASE("collect writes a valid manifest and dataset") {
	TempDir dir("navmini_collect");
	CollectConfig c = small_collect_config();
	DatasetManifest m = collect(c, 77, dir.path.string());
	CHECK(m.episodes.size() == 6);
	for (const auto& e : m.episodes) {
		CHECK(e.length >= 2);
		CHECK(e.length <= 181);
		CHECK(e.scenario == "simple");
	}
	// loads and verifies byte sizes
	DatasetManifest back = DatasetManifest::load(dir.path.string());
	CHECK(back.episodes.size() == 6);
	Dataset d = Dataset::load(dir.path.string());
	CHECK(d.episodes.size() == 6);
	for (const auto& ep : d.episodes) {
		CHECK(ep.dones.back() == 1);
	}
}

TEST_CASE("collect is byte-identical per seed") {
	TempDir a("navmini_collect_a");
	TempDir b("navmini_collect_b");
	CollectConfig c = small_collect_config();
	c.episodes = 3;
	collect(c, 123, a.path.string());
	collect(c, 123, b.path.string());
	for (const auto& entry : fs::directory_iterator(a.path)) {
		const fs::path other = b.path / entry.path().filename();
		REQUIRE(fs::exists(other));
		std::ifstream fa(entry.path(), std::ios::binary);
		std::ifstream fb(other, std::ios::binary);
		std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
		std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
		CHECK(ca == cb);
	}
}

TEST_CASE("collect draws scenarios only from the configured set") {
	TempDir dir("navmini_collect_scen");
	CollectConfig c = small_collect_config();
	c.scenarios = {Scenario::kSimple, Scenario::kOffice};
	c.episodes = 8;
	DatasetManifest m = collect(c, 9, dir.path.string());
	for (const auto& e : m.episodes) {
		CHECK((e.scenario == "simple" || e.scenario == "office"));
	}
}

TEST_CASE("stored rewards replay exactly from (scenario, seed, actions)") {
	TempDir dir("navmini_replay");
	CollectConfig c = small_collect_config();
	c.episodes = 4;
	c.difficulty_schedule = {2.0f};
	collect(c, 55, dir.path.string());
	Dataset d = Dataset::load(dir.path.string());
	for (const auto& ep : d.episodes) {
		SimState s = sim_reset(ep.scenario, ep.difficulty, ep.seed, c.sim);
		for (int t = 0; t < ep.length; ++t) {
			const Action a = Action::from_stored(ep.action(t), c.sim);
			StepOutcome out = sim_step(s, a);
			REQUIRE(out.reward == ep.rewards[static_cast<size_t>(t)]);
			REQUIRE((out.done ? 1 : 0) == ep.dones[static_cast<size_t>(t)]);
		}
		CHECK(s.done);
	}
}

TEST_CASE("split partitions episodes disjointly and deterministically") {
	TempDir dir("navmini_split");
	CollectConfig c = small_collect_config();
	c.episodes = 10;
	DatasetManifest m = collect(c, 31, dir.path.string());
	auto [train, val] = split(m, 0.2f, 7);
	CHECK(train.episodes.size() == 8);
	CHECK(val.episodes.size() == 2);
	std::set<std::string> all;
	for (const auto& e : train.episodes) all.insert(e.file);
	for (const auto& e : val.episodes) all.insert(e.file);
	CHECK(all.size() == 10);
	auto [train2, val2] = split(m, 0.2f, 7);
	for (size_t i = 0; i < val.episodes.size(); ++i) CHECK(val.episodes[i].file == val2.episodes[i].file);
}

TEST_CASE("split rejects degenerate inputs") {
	DatasetManifest m;
	m.episodes.resize(1);
	CHECK_THROWS_AS(split(m, 0.5f, 0), Error);
	m.episodes.resize(4);
	CHECK_THROWS_AS(split(m, 0.0f, 0), Error);
	CHECK_THROWS_AS(split(m, 1.0f, 0), Error);
}

TEST_CASE("ground-truth sidecars are written when requested") {
	TempDir dir("navmini_collect_gt");
	CollectConfig c = small_collect_config();
	c.episodes = 2;
	c.store_ground_truth = true;
	DatasetManifest m = collect(c, 3, dir.path.string());
	CHECK(m.has_ground_truth);
	for (const auto& e : m.episodes) {
		const fs::path depth = dir.path / (e.file + ".depth");
		const fs::path labels = dir.path / (e.file + ".labels");
		REQUIRE(fs::exists(depth));
		REQUIRE(fs::exists(labels));
		CHECK(fs::file_size(depth) == static_cast<uint64_t>(e.length) * 16 * 16 * 4);
		CHECK(fs::file_size(labels) == static_cast<uint64_t>(e.length) * 16 * 16);
	}
}

TEST_CASE("manifest load rejects a size mismatch") {
	TempDir dir("navmini_manifest_bad");
	CollectConfig c = small_collect_config();
	c.episodes = 2;
	DatasetManifest m = collect(c, 13, dir.path.string());
	fs::resize_file(dir.path / m.episodes[0].file, 10);
	CHECK_THROWS_AS(DatasetManifest::load(dir.path.string()), IoError);
}
