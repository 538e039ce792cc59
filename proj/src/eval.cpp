#include "navmini/eval.hpp"

#include <cmath>
#include <fstream>

#include "navmini/error.hpp"
#include "navmini/image_io.hpp"
#include "navmini/ops.hpp"

namespace navmini {

// mean squared difference between a planar [3,H,W] float image and a u8 frame
double frame_mse(const std::vector<float>& planar, const uint8_t* frame, int h, int w) {
	double acc = 0.0;
	constexpr float kInv = 1.0f / 255.0f;
	for (int c = 0; c < 3; ++c) {
		for (int y = 0; y < h; ++y) {
			for (int x = 0; x < w; ++x) {
				const size_t px = static_cast<size_t>(y) * w + x;
				const float gt = static_cast<float>(frame[px * 3 + c]) * kInv;
				const float d = planar[static_cast<size_t>(c) * h * w + px] - gt;
				acc += static_cast<double>(d) * d;
			}
		}
	}
	return acc / (3.0 * h * w);
}

namespace {

double image_mse_u8_u8(const uint8_t* a, const uint8_t* b, int h, int w) {
	double acc = 0.0;
	constexpr double kInv = 1.0 / 255.0;
	const size_t n = static_cast<size_t>(h) * w * 3;
	for (size_t i = 0; i < n; ++i) {
		const double d = (static_cast<double>(a[i]) - b[i]) * kInv;
		acc += d * d;
	}
	return acc / static_cast<double>(n);
}

double image_mse_const_u8(float value, const uint8_t* frame, int h, int w) {
	double acc = 0.0;
	constexpr double kInv = 1.0 / 255.0;
	const size_t n = static_cast<size_t>(h) * w * 3;
	for (size_t i = 0; i < n; ++i) {
		const double d = static_cast<double>(frame[i]) * kInv - value;
		acc += d * d;
	}
	return acc / static_cast<double>(n);
}

double vec_mse(const std::array<float, 2>& a, const std::array<float, 2>& b) {
	const double dx = static_cast<double>(a[0]) - b[0];
	const double dy = static_cast<double>(a[1]) - b[1];
	return (dx * dx + dy * dy) / 2.0;
}

struct WindowWalk {
	std::vector<std::pair<const Episode*, int>> windows;
	int skipped = 0;
};

WindowWalk collect_windows(const Dataset& data, int needed, int max_windows) {
	WindowWalk walk;
	for (const auto& ep : data.episodes) {
		if (ep.length < needed) {
			++walk.skipped;
			continue;
		}
		for (int s = 0; s + needed <= ep.length; ++s) walk.windows.push_back({&ep, s});
	}
	if (max_windows > 0 && static_cast<int>(walk.windows.size()) > max_windows) {
		// even stride keeps coverage across episodes deterministic
		std::vector<std::pair<const Episode*, int>> kept;
		const double stride = static_cast<double>(walk.windows.size()) / max_windows;
		for (int i = 0; i < max_windows; ++i) {
			kept.push_back(walk.windows[static_cast<size_t>(i * stride)]);
		}
		walk.windows = std::move(kept);
	}
	return walk;
}

} // namespace

void DreamErrorCurve::save_csv(const std::string& path) const {
	std::ofstream f(path);
	if (!f) throw IoError("cannot write " + path);
	f << "n,image_mse,vector_mse,grey_image,grey_vector,static_image,static_vector\n";
	for (int n = 0; n < horizon; ++n) {
		f << (n + 1) << "," << image_mse[static_cast<size_t>(n)] << "," << vector_mse[static_cast<size_t>(n)] << ","
		  << grey_image[static_cast<size_t>(n)] << "," << grey_vector[static_cast<size_t>(n)] << ","
		  << static_image[static_cast<size_t>(n)] << "," << static_vector[static_cast<size_t>(n)] << "\n";
	}
}

DreamErrorCurve nstep_dream_error(const WorldModel& wm, const Dataset& validation, int context, int horizon, int max_windows) {
	if (context < 1 || horizon < 1) throw Error("nstep_dream_error: context and horizon must be >= 1");
	DreamErrorCurve curve = baseline_errors(validation, context, horizon, max_windows);
	WindowWalk walk = collect_windows(validation, context + horizon, max_windows);
	if (walk.windows.empty()) throw Error("nstep_dream_error: every episode is shorter than context+horizon");

	const int h = validation.manifest.height;
	const int w = validation.manifest.width;
	std::vector<double> img_acc(static_cast<size_t>(horizon), 0.0);
	std::vector<double> vec_acc(static_cast<size_t>(horizon), 0.0);
	for (const auto& [ep, s] : walk.windows) {
		std::vector<std::array<float, 3>> actions;
		for (int k = 0; k < horizon; ++k) actions.push_back(ep->action(s + context - 1 + k));
		DreamResult dr = dream(wm, *ep, s, context, actions);
		for (int k = 0; k < horizon; ++k) {
			const int target = s + context + k;
			img_acc[static_cast<size_t>(k)] += frame_mse(dr.images[static_cast<size_t>(k)], ep->frame(target), h, w);
			const auto tv = ep->vec(target);
			vec_acc[static_cast<size_t>(k)] += vec_mse(dr.vectors[static_cast<size_t>(k)], {tv[0], tv[1]});
		}
	}
	const double n = static_cast<double>(walk.windows.size());
	for (int k = 0; k < horizon; ++k) {
		curve.image_mse[static_cast<size_t>(k)] = static_cast<float>(img_acc[static_cast<size_t>(k)] / n);
		curve.vector_mse[static_cast<size_t>(k)] = static_cast<float>(vec_acc[static_cast<size_t>(k)] / n);
	}
	return curve;
}

DreamErrorCurve baseline_errors(const Dataset& validation, int context, int horizon, int max_windows) {
	if (context < 1 || horizon < 1) throw Error("baseline_errors: context and horizon must be >= 1");
	WindowWalk walk = collect_windows(validation, context + horizon, max_windows);
	if (walk.windows.empty()) throw Error("baseline_errors: every episode is shorter than context+horizon");

	const int h = validation.manifest.height;
	const int w = validation.manifest.width;
	DreamErrorCurve curve;
	curve.context = context;
	curve.horizon = horizon;
	curve.windows_used = static_cast<int>(walk.windows.size());
	curve.windows_skipped = walk.skipped;
	curve.image_mse.assign(static_cast<size_t>(horizon), 0.0f);
	curve.vector_mse.assign(static_cast<size_t>(horizon), 0.0f);
	curve.grey_image.assign(static_cast<size_t>(horizon), 0.0f);
	curve.grey_vector.assign(static_cast<size_t>(horizon), 0.0f);
	curve.static_image.assign(static_cast<size_t>(horizon), 0.0f);
	curve.static_vector.assign(static_cast<size_t>(horizon), 0.0f);

	std::vector<double> gi(static_cast<size_t>(horizon), 0.0), gv(static_cast<size_t>(horizon), 0.0);
	std::vector<double> si(static_cast<size_t>(horizon), 0.0), sv(static_cast<size_t>(horizon), 0.0);
	for (const auto& [ep, s] : walk.windows) {
		const int last_ctx = s + context - 1;
		const auto last_vec = ep->vec(last_ctx);
		for (int k = 0; k < horizon; ++k) {
			const int target = s + context + k;
			gi[static_cast<size_t>(k)] += image_mse_const_u8(0.5f, ep->frame(target), h, w);
			const auto tv = ep->vec(target);
			gv[static_cast<size_t>(k)] += vec_mse({0.0f, 0.0f}, {tv[0], tv[1]});
			si[static_cast<size_t>(k)] += image_mse_u8_u8(ep->frame(last_ctx), ep->frame(target), h, w);
			sv[static_cast<size_t>(k)] += vec_mse({last_vec[0], last_vec[1]}, {tv[0], tv[1]});
		}
	}
	const double n = static_cast<double>(walk.windows.size());
	for (int k = 0; k < horizon; ++k) {
		curve.grey_image[static_cast<size_t>(k)] = static_cast<float>(gi[static_cast<size_t>(k)] / n);
		curve.grey_vector[static_cast<size_t>(k)] = static_cast<float>(gv[static_cast<size_t>(k)] / n);
		curve.static_image[static_cast<size_t>(k)] = static_cast<float>(si[static_cast<size_t>(k)] / n);
		curve.static_vector[static_cast<size_t>(k)] = static_cast<float>(sv[static_cast<size_t>(k)] / n);
	}
	return curve;
}

void save_dream_filmstrip(const WorldModel& wm, const Episode& ep, int start, int context, int horizon,
	const std::string& png_path) {
	if (start + context + horizon > ep.length) throw Error("filmstrip: window exceeds the episode");
	const int h = ep.height;
	const int w = ep.width;
	std::vector<std::array<float, 3>> actions;
	for (int k = 0; k < horizon; ++k) actions.push_back(ep.action(start + context - 1 + k));
	DreamResult dr = dream(wm, ep, start, context, actions);

	const int cols = context + horizon;
	const int strip_w = cols * (w + 1) - 1;
	const int strip_h = 2 * h + 1;
	std::vector<uint8_t> canvas(static_cast<size_t>(strip_h) * strip_w * 3, 32);

	auto blit_u8 = [&](const uint8_t* frame, int row, int col) {
		for (int y = 0; y < h; ++y) {
			for (int x = 0; x < w; ++x) {
				const size_t dst = ((static_cast<size_t>(row) * (h + 1) + y) * strip_w + static_cast<size_t>(col) * (w + 1) + x) * 3;
				const size_t src = (static_cast<size_t>(y) * w + x) * 3;
				canvas[dst] = frame[src];
				canvas[dst + 1] = frame[src + 1];
				canvas[dst + 2] = frame[src + 2];
			}
		}
	};
	auto blit_planar = [&](const std::vector<float>& img, int row, int col) {
		for (int y = 0; y < h; ++y) {
			for (int x = 0; x < w; ++x) {
				const size_t dst = ((static_cast<size_t>(row) * (h + 1) + y) * strip_w + static_cast<size_t>(col) * (w + 1) + x) * 3;
				const size_t px = static_cast<size_t>(y) * w + x;
				for (int c = 0; c < 3; ++c) {
					const float v = img[static_cast<size_t>(c) * h * w + px];
					canvas[dst + static_cast<size_t>(c)] = static_cast<uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
				}
			}
		}
	};

	// top row: ground truth (context then targets); bottom row: context
	// copied, then the dream
	for (int c = 0; c < cols; ++c) blit_u8(ep.frame(start + c), 0, c);
	for (int c = 0; c < context; ++c) blit_u8(ep.frame(start + c), 1, c);
	for (int k = 0; k < horizon; ++k) blit_planar(dr.images[static_cast<size_t>(k)], 1, context + k);
	write_png(png_path, strip_h, strip_w, canvas);
}

void PolicyEvalResult::save_csv(const std::string& path) const {
	std::ofstream f(path);
	if (!f) throw IoError("cannot write " + path);
	f << "episode,event,length,total_reward\n";
	for (size_t i = 0; i < events.size(); ++i) {
		f << i << "," << events[i] << "," << lengths[i] << "," << total_rewards[i] << "\n";
	}
}

PolicyEvalResult evaluate_policy(const PolicyBundle& bundle, const WorldModel* wm, const EnvConfig& env_config,
	float difficulty, int episodes, uint64_t seed) {
	if (episodes < 1) throw Error("evaluate_policy: episodes must be >= 1");
	const bool e2e = bundle.feature_source == "end-to-end";
	if (!e2e && wm == nullptr) throw Error("evaluate_policy: frozen-wm bundle needs the world model");
	const int image_h = env_config.camera.height;

	PolicyEvalResult result;
	Rng rng(seed);
	Env env(env_config);
	int successes = 0;
	for (int e = 0; e < episodes; ++e) {
		Observation obs = env.reset(difficulty, rng.next_u32());
		std::deque<std::vector<float>> history;
		float total_reward = 0.0f;
		int steps = 0;
		Event event = Event::kNone;
		bool done = false;
		while (!done) {
			NoGradGuard ng;
			std::vector<const uint8_t*> ptr{obs.rgb.data()};
			Tensor images = WorldModel::frames_to_tensor(ptr, image_h, image_h);
			Tensor feat = e2e ? image_encoder_forward(bundle.params, image_h, images) : wm->encode(images, nullptr).z;
			history.push_back(feat.values());
			while (static_cast<int>(history.size()) > bundle.config.seq_len) history.pop_front();
			const auto in = assemble_policy_input(bundle.config, history, obs.goal_vec);
			PolicyOut fwd = policy_forward(bundle.params, bundle.config, Tensor::from_data({1, bundle.config.input_dim()}, in));
			const int action = argmax_action(fwd.logits.values().data());
			auto res = env.step(Action::from_discrete(static_cast<DiscreteAction>(action), env_config.sim));
			total_reward += res.outcome.reward;
			obs = std::move(res.obs);
			done = res.outcome.done;
			event = res.outcome.event;
			++steps;
		}
		successes += event == Event::kGoalReached ? 1 : 0;
		result.events.push_back(event_name(event));
		result.lengths.push_back(steps);
		result.total_rewards.push_back(total_reward);
	}
	result.success_rate = static_cast<float>(successes) / static_cast<float>(episodes);
	return result;
}

} // namespace navmini
