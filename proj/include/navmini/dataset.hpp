#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "navmini/env.hpp"
#include "navmini/episode.hpp"

namespace navmini {

struct ManifestEntry {
	std::string file;
	int length = 0;
	std::string scenario;
	uint64_t seed = 0;
	float difficulty = 0.0f;
	uint64_t bytes = 0;
};

struct DatasetManifest {
	int version = 1;
	int height = 0;
	int width = 0;
	bool has_ground_truth = false;
	std::vector<ManifestEntry> episodes;

	void save(const std::string& dir) const;
	// Verifies every listed file exists with the recorded byte size.
	static DatasetManifest load(const std::string& dir);
};

// Dataset recipes mirroring the scenario-scope variants: S = {simple},
// SO = {simple, office}, SOT = {simple, office, textured}.
std::vector<Scenario> scenario_set_from_name(const std::string& name);

struct CollectConfig {
	std::vector<Scenario> scenarios{Scenario::kSimple};
	int episodes = 10;
	std::vector<float> difficulty_schedule{0.0f}; // sampled uniformly per episode
	float heuristic_noise = 0.3f;
	bool store_ground_truth = false; // writes .depth.bin / .labels.bin sidecars
	SimConfig sim;
	CameraModel camera;
};

// Source of actions during collection; default is the stochastic heuristic.
using ActionSource = std::function<Action(const Env&, const Observation&, Rng&)>;

// Runs episodes and writes the dataset directory (episode files plus
// manifest.json). Deterministic per seed.
DatasetManifest collect(const CollectConfig& config, uint64_t seed, const std::string& out_dir,
	const ActionSource& source = nullptr);

// Episode-level random partition into (train, validation).
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest, float validation_fraction, uint64_t seed);

// In-memory dataset: manifest plus decoded episodes.
struct Dataset {
	DatasetManifest manifest;
	std::vector<Episode> episodes;

	static Dataset load(const std::string& dir);
	static Dataset from_manifest(const std::string& dir, const DatasetManifest& manifest);
	int total_steps() const;
};

} // namespace navmini
