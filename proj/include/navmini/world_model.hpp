#pragma once

#include <array>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "navmini/dataset.hpp"
#include "navmini/episode.hpp"
#include "navmini/ops.hpp"
#include "navmini/param_set.hpp"
#include "navmini/rng.hpp"

namespace navmini {

struct WorldModelConfig {
	std::string variant = "transformer"; // transformer | rssm
	int z_dim = 64;
	int embed_dim = 64;
	int layers = 4;
	int heads = 4;
	int context_len = 16;
	float kappa = 0.001f;
	int image_h = 64;
	int image_w = 64;
	bool reward_head = false;
	// rssm dims
	int rssm_deter = 256;
	int rssm_stoch = 32;
	int rssm_hidden = 256;
	float rssm_balance = 0.8f; // weight on the prior-side KL term

	int feature_dim() const; // controller input width (z_dim for both variants)
	void validate() const;
};

// A (mu, logvar) pair over the stochastic code; logvar is clamped to
// [-10, 10] before exponentiation everywhere it is used.
struct GaussianCode {
	Tensor mu;
	Tensor logvar;
};

struct LatentState {
	Tensor z;
	GaussianCode code;
	Tensor h;
};

struct WmLossParts {
	Tensor total;
	float prediction = 0.0f;
	float reconstruction = 0.0f;
	float kl = 0.0f;
	float total_value = 0.0f;
	float reward = 0.0f; // reward-head mse, outside the Eq-style sum
};

// One training window: pointers into an episode.
struct SeqWindow {
	const Episode* episode = nullptr;
	int start = 0;
	int length = 0;
};

class WorldModel {
public:
	WorldModel(const WorldModelConfig& config, uint64_t init_seed);
	WorldModel(const WorldModelConfig& config, ParamSet params);

	const WorldModelConfig& config() const { return config_; }
	ParamSet& params() { return params_; }
	const ParamSet& params() const { return params_; }

	// ----- encoder / decoder -----
	// images [N,3,H,W] in [0,1]. noise null -> deterministic (eps = 0).
	struct Encoded {
		GaussianCode code;
		Tensor z; // [N, z_dim]
	};
	Encoded encode(const Tensor& images, Rng* noise) const;
	// conv trunk features before the stochastic heads (rssm posterior input)
	Tensor encode_features(const Tensor& images) const;

	struct Decoded {
		Tensor image; // [N,3,H,W], sigmoid range
		Tensor vec;   // [N,2]
	};
	Decoded decode(const Tensor& features) const;

	// ----- sequence predictors -----
	// z/a/v rows per step; h_t predicts step t+1. Throws on length overflow.
	Tensor predict_transformer(const Tensor& z_seq, const Tensor& a_seq, const Tensor& v_seq) const;

	struct RssmStep {
		Tensor h; // [N, deter]
		GaussianCode prior;
		GaussianCode posterior; // == prior when no image features given
	};
	// prev_* [N, ...]; action/vec [N,3]/[N,2]; features optional (training).
	RssmStep predict_rssm(
		const Tensor& prev_h, const Tensor& prev_z, const Tensor& action, const Tensor& vec, const Tensor* features,
		Rng* noise) const;
	Tensor rssm_initial_h(int n) const { return Tensor::zeros({n, config_.rssm_deter}); }
	Tensor rssm_initial_z(int n) const { return Tensor::zeros({n, config_.rssm_stoch}); }
	Tensor sample_code(const GaussianCode& code, Rng* noise) const;

	Tensor reward_from(const Tensor& h, const Tensor& z) const; // [N,1]

	// decoder input width: z/h for the transformer, [h;z] for the rssm
	int decoder_input_dim() const;

	// ----- loss -----
	WmLossParts loss(const std::vector<SeqWindow>& windows, Rng* noise) const;

	// ----- persistence -----
	void save(const std::string& base_path) const; // base.{json,bin,meta.json}
	static WorldModel load(const std::string& base_path);

	// [0,1] planar float tensor from u8 interleaved frames
	static Tensor frames_to_tensor(const std::vector<const uint8_t*>& frames, int h, int w);

	// u8 interleaved -> planar float for a single frame
	static Tensor frame_to_tensor(const uint8_t* frame, int h, int w) { return frames_to_tensor({frame}, h, w); }

private:
	void build_params(uint64_t seed);
	Tensor decode_trunk(const Tensor& features) const;

	WorldModelConfig config_;
	ParamSet params_;
	int n_convs_ = 0;
	int enc_flat_ = 0; // flattened conv output size
};

// Open-loop rollout state: feed back the model's own predictions. The
// transformer re-encodes its decoded frame; the rssm propagates (h, prior).
class DreamRoller {
public:
	virtual ~DreamRoller() = default;
	// Prime with real context steps (frames as u8 rgb rows, goal vectors,
	// executed actions).
	virtual void init(const Episode& ep, int start, int context) = 0;
	// Current stochastic feature (controller input) and goal vector.
	virtual const std::vector<float>& feature() const = 0;
	virtual std::array<float, 2> vec() const = 0;

	struct Out {
		std::vector<float> image; // predicted frame, planar [3,H,W] in [0,1]
		std::array<float, 2> vec;
		float reward = 0.0f; // reward-head output (0 without the head)
	};
	virtual Out step(const std::array<float, 3>& action) = 0;
};

std::unique_ptr<DreamRoller> make_dream_roller(const WorldModel& wm);

// Dream n steps from the episode prefix [start, start+context) feeding the
// given future actions; returns predicted frames/vectors, deterministic.
struct DreamResult {
	int h = 0, w = 0;
	std::vector<std::vector<float>> images; // n entries, planar [3,H,W]
	std::vector<std::array<float, 2>> vectors;
};
DreamResult dream(
	const WorldModel& wm, const Episode& ep, int start, int context, const std::vector<std::array<float, 3>>& actions);

// ----- offline training -----
struct TrainWmConfig {
	int steps = 4000;
	int batch_size = 8;
	float lr = 1e-3f;
	int val_interval = 200;
	int val_windows = 64;
	float val_fraction = 0.1f; // used when no explicit validation set is given
	int log_interval = 10;
};

struct TrainWmResult {
	float best_val = 0.0f;
	int best_step = 0;
	float first_train_loss = 0.0f;
	float last_train_loss = 0.0f;
};

// Adam on the window loss; keeps the best-validation parameters and writes
// checkpoint (base.{json,bin,meta.json}) plus a loss-log csv
// (step,total,prediction,reconstruction,kl,validation).
TrainWmResult train_wm(WorldModel& wm, const Dataset& train, const Dataset& val, const TrainWmConfig& config,
	uint64_t seed, const std::string& ckpt_base, const std::string& log_csv);

// ----- shared image encoder -----
// The conv trunk + mu head used by the world model, reusable as the
// end-to-end baseline's encoder (identical architecture and names, so
// either kind of checkpoint can back a frozen feature extractor).
void build_image_encoder(ParamSet& params, int image_h, int out_dim, Rng& rng);
Tensor image_encoder_forward(const ParamSet& params, int image_h, const Tensor& images);

} // namespace navmini
