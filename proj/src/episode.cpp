#include "navmini/episode.hpp"

#include <cstring>
#include <fstream>

#include "navmini/error.hpp"

namespace navmini {

namespace {

constexpr char kMagic[4] = {'N', 'D', 'R', 'M'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& f, const std::string& path, size_t offset) {
	uint32_t v = 0;
	f.read(reinterpret_cast<char*>(&v), 4);
	if (!f) throw IoError("load_episode: truncated header at offset " + std::to_string(offset) + " in " + path);
	return v;
}

} // namespace

uint64_t Episode::file_bytes() const {
	const uint64_t block = frame_bytes() + 2 * 4 + 3 * 4 + 4 + 1;
	return 4 + 4 + 4 + 4 + 4 + static_cast<uint64_t>(length) * block;
}

void Episode::validate() const {
	if (length < 2) throw Error("episode: length must be >= 2, got " + std::to_string(length));
	const size_t t = static_cast<size_t>(length);
	if (frames.size() != t * frame_bytes() || vectors.size() != t * 2 || actions.size() != t * 3 || rewards.size() != t ||
		dones.size() != t) {
		throw Error("episode: sequence lengths disagree");
	}
	for (int i = 0; i < length - 1; ++i) {
		if (dones[static_cast<size_t>(i)]) throw Error("episode: done flag before the final step at t=" + std::to_string(i));
	}
}

void save_episode(const Episode& ep, const std::string& path) {
	ep.validate();
	std::ofstream f(path, std::ios::binary);
	if (!f) throw IoError("save_episode: cannot open " + path);
	f.write(kMagic, 4);
	put_u32(f, kVersion);
	put_u32(f, static_cast<uint32_t>(ep.length));
	put_u32(f, static_cast<uint32_t>(ep.height));
	put_u32(f, static_cast<uint32_t>(ep.width));
	const size_t fb = ep.frame_bytes();
	for (int t = 0; t < ep.length; ++t) {
		f.write(reinterpret_cast<const char*>(ep.frames.data() + static_cast<size_t>(t) * fb), static_cast<std::streamsize>(fb));
		f.write(reinterpret_cast<const char*>(ep.vectors.data() + static_cast<size_t>(t) * 2), 2 * 4);
		f.write(reinterpret_cast<const char*>(ep.actions.data() + static_cast<size_t>(t) * 3), 3 * 4);
		f.write(reinterpret_cast<const char*>(ep.rewards.data() + static_cast<size_t>(t)), 4);
		f.write(reinterpret_cast<const char*>(ep.dones.data() + static_cast<size_t>(t)), 1);
	}
	if (!f) throw IoError("save_episode: short write to " + path);
}

Episode load_episode(const std::string& path) {
	std::ifstream f(path, std::ios::binary);
	if (!f) throw IoError("load_episode: cannot open " + path);
	char magic[4];
	f.read(magic, 4);
	if (!f || std::memcmp(magic, kMagic, 4) != 0) {
		throw IoError("load_episode: bad magic at offset 0 in " + path);
	}
	const uint32_t version = get_u32(f, path, 4);
	if (version != kVersion) {
		throw IoError("load_episode: unsupported version " + std::to_string(version) + " at offset 4 in " + path);
	}
	Episode ep;
	ep.length = static_cast<int>(get_u32(f, path, 8));
	ep.height = static_cast<int>(get_u32(f, path, 12));
	ep.width = static_cast<int>(get_u32(f, path, 16));
	if (ep.length < 2 || ep.height <= 0 || ep.width <= 0) {
		throw IoError("load_episode: invalid dimensions in header of " + path);
	}
	const size_t t = static_cast<size_t>(ep.length);
	const size_t fb = ep.frame_bytes();
	ep.frames.resize(t * fb);
	ep.vectors.resize(t * 2);
	ep.actions.resize(t * 3);
	ep.rewards.resize(t);
	ep.dones.resize(t);
	size_t offset = 20;
	for (size_t i = 0; i < t; ++i) {
		f.read(reinterpret_cast<char*>(ep.frames.data() + i * fb), static_cast<std::streamsize>(fb));
		f.read(reinterpret_cast<char*>(ep.vectors.data() + i * 2), 2 * 4);
		f.read(reinterpret_cast<char*>(ep.actions.data() + i * 3), 3 * 4);
		f.read(reinterpret_cast<char*>(ep.rewards.data() + i), 4);
		f.read(reinterpret_cast<char*>(ep.dones.data() + i), 1);
		if (!f) throw IoError("load_episode: truncated step block at offset " + std::to_string(offset) + " in " + path);
		offset += fb + 2 * 4 + 3 * 4 + 4 + 1;
	}
	ep.validate();
	return ep;
}

} // namespace navmini
