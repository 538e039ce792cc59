#pragma once

#include <functional>
#include <string>
#include <vector>

#include "navmini/dataset.hpp"
#include "navmini/param_set.hpp"
#include "navmini/tensor.hpp"

namespace navmini {

// Dataset with renderer ground truth attached (depth meters + class labels).
struct LabeledDataset {
	Dataset data;
	std::vector<std::vector<float>> depth;    // per episode, T*H*W
	std::vector<std::vector<uint8_t>> labels; // per episode, T*H*W

	static LabeledDataset load(const std::string& dir);
	int height() const { return data.manifest.height; }
	int width() const { return data.manifest.width; }
};

// Feature path used by a probe: produces [N, feature_dim] from [N,3,H,W]
// images. When `trainable` is non-null, its entries receive gradients (the
// joint source); frozen sources build constants.
struct ProbeSource {
	std::string name;
	int feature_dim = 64;
	std::function<Tensor(const Tensor& images)> features;
	ParamSet* trainable = nullptr;
};

struct ProbeTrainConfig {
	int steps = 1200;
	int batch = 16;
	float lr = 1e-3f;
	float test_fraction = 0.2f;
	int log_interval = 100;
};

struct ProbeResult {
	std::string source;
	float seg_bce = 0.0f;            // test mean per pixel-class
	float depth_prop_mse = 0.0f;     // test mean over non-background pixels
	int64_t decoder_params = 0;      // architecture-identity check
	float train_loss_first = 0.0f;
	float train_loss_last = 0.0f;
};

// Trains the shared probe decoder (transposed-conv stack with a one-vs-rest
// class head and a softplus depth head) on the labeled dataset and reports
// test-set errors. Background pixels are excluded from the depth metric.
ProbeResult probe(const ProbeSource& source, const LabeledDataset& labeled, const ProbeTrainConfig& config, uint64_t seed);

constexpr int kProbeClasses = 5;

} // namespace navmini
