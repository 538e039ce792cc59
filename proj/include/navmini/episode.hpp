#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "navmini/sim.hpp"

namespace navmini {

// One recorded episode: time-aligned sequences of observations, continuous
// actions, rewards and done flags. frames[t] is the observation the agent
// saw before taking actions[t]; rewards[t]/dones[t] are the step outcome.
// dones is true only at the final index.
struct Episode {
	int length = 0; // T
	int height = 0;
	int width = 0;
	std::vector<uint8_t> frames; // T*H*W*3
	std::vector<float> vectors;  // T*2 goal in robot frame
	std::vector<float> actions;  // T*3 continuous commands
	std::vector<float> rewards;  // T
	std::vector<uint8_t> dones;  // T
	Scenario scenario = Scenario::kSimple;
	uint64_t seed = 0;
	float difficulty = 0.0f;

	const uint8_t* frame(int t) const { return frames.data() + static_cast<size_t>(t) * height * width * 3; }
	std::array<float, 2> vec(int t) const { return {vectors[static_cast<size_t>(t) * 2], vectors[static_cast<size_t>(t) * 2 + 1]}; }
	std::array<float, 3> action(int t) const {
		return {actions[static_cast<size_t>(t) * 3], actions[static_cast<size_t>(t) * 3 + 1], actions[static_cast<size_t>(t) * 3 + 2]};
	}
	size_t frame_bytes() const { return static_cast<size_t>(height) * width * 3; }
	// Serialized size of this episode on disk.
	uint64_t file_bytes() const;
	void validate() const; // throws on broken invariants
};

// Binary episode file: magic "NDRM", u32 version=1, u32 T, u32 H, u32 W,
// then T blocks of [H*W*3 u8 rgb][2 f32 vector][3 f32 action][1 f32 reward]
// [1 u8 done]; everything little-endian. The scenario/seed/difficulty fields
// travel in the dataset manifest, not in the episode file.
void save_episode(const Episode& ep, const std::string& path);
Episode load_episode(const std::string& path);

} // namespace navmini
