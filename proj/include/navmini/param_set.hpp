#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navmini/rng.hpp"
#include "navmini/tensor.hpp"

namespace navmini {

// Named collection of trainable leaves plus their Adam moment buffers.
// Iteration order is the name order (std::map), so updates and checksums
// are deterministic.
class ParamSet {
public:
	struct Entry {
		Tensor param;
		std::vector<float> m; // first moment
		std::vector<float> v; // second moment
	};

	// Registers a new leaf tensor; name must be unique.
	Tensor add(const std::string& name, Tensor init);
	Tensor get(const std::string& name) const;
	bool contains(const std::string& name) const { return entries_.count(name) != 0; }

	// Common initializers. fan_in scaling, N(0, sqrt(2/fan_in)) for relu stacks.
	Tensor add_kaiming(const std::string& name, Shape shape, int fan_in, Rng& rng);
	Tensor add_normal(const std::string& name, Shape shape, float std_dev, Rng& rng);
	Tensor add_uniform(const std::string& name, Shape shape, float lo, float hi, Rng& rng);
	Tensor add_zeros(const std::string& name, Shape shape);
	Tensor add_ones(const std::string& name, Shape shape);

	void zero_grad();
	size_t size() const { return entries_.size(); }
	int64_t total_params() const;

	// FNV-1a over the raw parameter bytes in name order.
	uint64_t checksum() const;

	const std::map<std::string, Entry>& entries() const { return entries_; }
	std::map<std::string, Entry>& entries_mut() { return entries_; }

private:
	std::map<std::string, Entry> entries_;
};

// Bias-corrected Adam step over every entry with a populated gradient.
// Gradient buffers are left untouched; the caller zeroes them.
void adam_step(ParamSet& params, float lr, float beta1, float beta2, float eps, int step);

inline void adam_step(ParamSet& params, float lr, int step) {
	adam_step(params, lr, 0.9f, 0.999f, 1e-8f, step);
}

// ----- checkpoint io -----
// Writes <base>.json (manifest: name -> shape, dtype, byte offset) and
// <base>.bin (one little-endian raw f32 blob). Round-trip is bit-exact.
void save_checkpoint(const ParamSet& params, const std::string& base_path);
ParamSet load_checkpoint(const std::string& base_path);

} // namespace navmini
