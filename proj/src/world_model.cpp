#include "navmini/world_model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "navmini/error.hpp"

namespace op = navmini::ops;

namespace navmini {

namespace {

int int_log2(int v) {
	int l = 0;
	while ((1 << l) < v) ++l;
	return l;
}

std::vector<int> encoder_channels(int image_h) {
	const int n = std::max(0, int_log2(image_h) - 2);
	std::vector<int> c;
	for (int i = 0; i < n; ++i) c.push_back(std::min(256, 32 << i));
	return c;
}

// KL(N(mu1, e^lv1) || N(mu2, e^lv2)), summed over dims, mean over batch.
Tensor kl_pair(const Tensor& mu1, const Tensor& lv1, const Tensor& mu2, const Tensor& lv2) {
	const int batch = mu1.ndim() >= 2 ? mu1.dim(0) : 1;
	Tensor l1 = op::clamp(lv1, -10.0f, 10.0f);
	Tensor l2 = op::clamp(lv2, -10.0f, 10.0f);
	Tensor ratio = op::exp_op(op::sub(l1, l2));
	Tensor diff = op::sub(mu1, mu2);
	Tensor md = op::mul(op::mul(diff, diff), op::exp_op(op::scale(l2, -1.0f)));
	Tensor term = op::add(op::add(ratio, md), op::affine(op::sub(l2, l1), 1.0f, -1.0f));
	return op::scale(op::sum_all(term), 0.5f / static_cast<float>(batch));
}

nlohmann::json config_to_json(const WorldModelConfig& c) {
	return {
		{"variant", c.variant},
		{"z_dim", c.z_dim},
		{"embed_dim", c.embed_dim},
		{"layers", c.layers},
		{"heads", c.heads},
		{"context_len", c.context_len},
		{"kappa", c.kappa},
		{"image_h", c.image_h},
		{"image_w", c.image_w},
		{"reward_head", c.reward_head},
		{"rssm_deter", c.rssm_deter},
		{"rssm_stoch", c.rssm_stoch},
		{"rssm_hidden", c.rssm_hidden},
		{"rssm_balance", c.rssm_balance},
	};
}

WorldModelConfig config_from_json(const nlohmann::json& j) {
	WorldModelConfig c;
	c.variant = j.value("variant", c.variant);
	c.z_dim = j.value("z_dim", c.z_dim);
	c.embed_dim = j.value("embed_dim", c.embed_dim);
	c.layers = j.value("layers", c.layers);
	c.heads = j.value("heads", c.heads);
	c.context_len = j.value("context_len", c.context_len);
	c.kappa = j.value("kappa", c.kappa);
	c.image_h = j.value("image_h", c.image_h);
	c.image_w = j.value("image_w", c.image_w);
	c.reward_head = j.value("reward_head", c.reward_head);
	c.rssm_deter = j.value("rssm_deter", c.rssm_deter);
	c.rssm_stoch = j.value("rssm_stoch", c.rssm_stoch);
	c.rssm_hidden = j.value("rssm_hidden", c.rssm_hidden);
	c.rssm_balance = j.value("rssm_balance", c.rssm_balance);
	c.validate();
	return c;
}

} // namespace

int WorldModelConfig::feature_dim() const { return variant == "rssm" ? rssm_stoch : z_dim; }

void WorldModelConfig::validate() const {
	if (variant != "transformer" && variant != "rssm") {
		throw ConfigError("world model variant must be 'transformer' or 'rssm', got '" + variant + "'");
	}
	if (context_len < 2) throw ConfigError("context_len must be >= 2");
	if (image_h != image_w) throw ConfigError("square images only");
	if (image_h < 4 || (image_h & (image_h - 1)) != 0 || image_h > 64) {
		throw ConfigError("image size must be a power of two in [4, 64]");
	}
	if (embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
}

WorldModel::WorldModel(const WorldModelConfig& config, uint64_t init_seed) : config_(config) {
	config_.validate();
	build_params(init_seed);
}

WorldModel::WorldModel(const WorldModelConfig& config, ParamSet params) : config_(config), params_(std::move(params)) {
	config_.validate();
	const auto channels = encoder_channels(config_.image_h);
	n_convs_ = static_cast<int>(channels.size());
	const int spatial = config_.image_h >> n_convs_;
	enc_flat_ = (channels.empty() ? 3 : channels.back()) * spatial * spatial;
}

int WorldModel::decoder_input_dim() const {
	return config_.variant == "rssm" ? config_.rssm_deter + config_.rssm_stoch : config_.z_dim;
}

void WorldModel::build_params(uint64_t seed) {
	Rng rng(seed);
	const auto channels = encoder_channels(config_.image_h);
	n_convs_ = static_cast<int>(channels.size());
	const int spatial = config_.image_h >> n_convs_;
	enc_flat_ = (channels.empty() ? 3 : channels.back()) * spatial * spatial;

	// encoder
	int c_in = 3;
	for (int i = 0; i < n_convs_; ++i) {
		const int c_out = channels[static_cast<size_t>(i)];
		params_.add_kaiming("enc.conv" + std::to_string(i) + ".w", {c_out, c_in, 4, 4}, c_in * 16, rng);
		params_.add_zeros("enc.conv" + std::to_string(i) + ".b", {c_out});
		c_in = c_out;
	}
	const int code_dim = config_.variant == "rssm" ? config_.rssm_stoch : config_.z_dim;
	params_.add_kaiming("enc.mu.w", {enc_flat_, code_dim}, enc_flat_, rng);
	params_.add_zeros("enc.mu.b", {code_dim});
	params_.add_kaiming("enc.logvar.w", {enc_flat_, code_dim}, enc_flat_, rng);
	params_.add_zeros("enc.logvar.b", {code_dim});

	// decoder
	const int dec_in = decoder_input_dim();
	if (n_convs_ == 0) {
		params_.add_kaiming("dec.out.w", {dec_in, 3 * config_.image_h * config_.image_w}, dec_in, rng);
		params_.add_zeros("dec.out.b", {3 * config_.image_h * config_.image_w});
	} else {
		params_.add_kaiming("dec.fc.w", {dec_in, channels.back() * spatial * spatial}, dec_in, rng);
		params_.add_zeros("dec.fc.b", {channels.back() * spatial * spatial});
		for (int i = n_convs_ - 1; i >= 0; --i) {
			const int from = channels[static_cast<size_t>(i)];
			const int to = i == 0 ? 3 : channels[static_cast<size_t>(i - 1)];
			params_.add_kaiming("dec.deconv" + std::to_string(i) + ".w", {from, to, 4, 4}, from * 16, rng);
			params_.add_zeros("dec.deconv" + std::to_string(i) + ".b", {to});
		}
	}
	params_.add_kaiming("dec.vec1.w", {dec_in, 64}, dec_in, rng);
	params_.add_zeros("dec.vec1.b", {64});
	params_.add_kaiming("dec.vec2.w", {64, 2}, 64, rng);
	params_.add_zeros("dec.vec2.b", {2});

	if (config_.variant == "transformer") {
		const int e = config_.embed_dim;
		params_.add_normal("tok.z.w", {config_.z_dim, e}, 0.02f, rng);
		params_.add_normal("tok.a.w", {3, e}, 0.02f, rng);
		params_.add_normal("tok.v.w", {2, e}, 0.02f, rng);
		params_.add_zeros("tok.b", {e});
		params_.add_normal("tok.pos", {config_.context_len, e}, 0.02f, rng);
		for (int l = 0; l < config_.layers; ++l) {
			const std::string p = "blk" + std::to_string(l) + ".";
			params_.add_ones(p + "ln1.g", {e});
			params_.add_zeros(p + "ln1.b", {e});
			params_.add_normal(p + "attn.wqkv", {e, 3 * e}, 0.02f, rng);
			params_.add_zeros(p + "attn.bqkv", {3 * e});
			params_.add_normal(p + "attn.wo", {e, e}, 0.02f, rng);
			params_.add_zeros(p + "attn.bo", {e});
			params_.add_ones(p + "ln2.g", {e});
			params_.add_zeros(p + "ln2.b", {e});
			params_.add_normal(p + "mlp.fc1.w", {e, 4 * e}, 0.02f, rng);
			params_.add_zeros(p + "mlp.fc1.b", {4 * e});
			params_.add_normal(p + "mlp.fc2.w", {4 * e, e}, 0.02f, rng);
			params_.add_zeros(p + "mlp.fc2.b", {e});
		}
		params_.add_ones("head.ln.g", {e});
		params_.add_zeros("head.ln.b", {e});
		params_.add_normal("head.out.w", {e, config_.z_dim}, 0.02f, rng);
		params_.add_zeros("head.out.b", {config_.z_dim});
	} else {
		const int d = config_.rssm_deter;
		const int s = config_.rssm_stoch;
		const int h = config_.rssm_hidden;
		params_.add_kaiming("rssm.in.w", {s + 3 + 2, h}, s + 5, rng);
		params_.add_zeros("rssm.in.b", {h});
		params_.add_kaiming("rssm.gru.wx", {h, 3 * d}, h, rng);
		params_.add_kaiming("rssm.gru.wh", {d, 3 * d}, d, rng);
		params_.add_zeros("rssm.gru.b", {3 * d});
		params_.add_kaiming("rssm.prior.fc.w", {d, h}, d, rng);
		params_.add_zeros("rssm.prior.fc.b", {h});
		params_.add_kaiming("rssm.prior.mu.w", {h, s}, h, rng);
		params_.add_zeros("rssm.prior.mu.b", {s});
		params_.add_kaiming("rssm.prior.logvar.w", {h, s}, h, rng);
		params_.add_zeros("rssm.prior.logvar.b", {s});
		params_.add_kaiming("rssm.post.fc.w", {d + enc_flat_, h}, d + enc_flat_, rng);
		params_.add_zeros("rssm.post.fc.b", {h});
		params_.add_kaiming("rssm.post.mu.w", {h, s}, h, rng);
		params_.add_zeros("rssm.post.mu.b", {s});
		params_.add_kaiming("rssm.post.logvar.w", {h, s}, h, rng);
		params_.add_zeros("rssm.post.logvar.b", {s});
	}

	if (config_.reward_head) {
		const int in = config_.variant == "rssm" ? config_.rssm_deter + config_.rssm_stoch : 2 * config_.z_dim;
		params_.add_kaiming("rew.fc1.w", {in, 128}, in, rng);
		params_.add_zeros("rew.fc1.b", {128});
		params_.add_kaiming("rew.fc2.w", {128, 1}, 128, rng);
		params_.add_zeros("rew.fc2.b", {1});
	}
}

Tensor WorldModel::encode_features(const Tensor& images) const {
	if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != config_.image_h || images.dim(3) != config_.image_w) {
		throw ShapeError("encode: expected [N,3," + std::to_string(config_.image_h) + "," + std::to_string(config_.image_w) +
			"], got " + shape_str(images.shape()));
	}
	Tensor x = images;
	for (int i = 0; i < n_convs_; ++i) {
		x = op::relu(op::conv2d(
			x, params_.get("enc.conv" + std::to_string(i) + ".w"), params_.get("enc.conv" + std::to_string(i) + ".b"), 2, 1));
	}
	return op::reshape(x, {images.dim(0), enc_flat_});
}

Tensor WorldModel::sample_code(const GaussianCode& code, Rng* noise) const {
	if (noise == nullptr) return code.mu;
	Tensor eps = Tensor::zeros(code.mu.shape());
	for (auto& v : eps.values_mut()) v = noise->normal();
	return op::add(code.mu, op::mul(op::exp_op(op::scale(code.logvar, 0.5f)), eps));
}

WorldModel::Encoded WorldModel::encode(const Tensor& images, Rng* noise) const {
	Tensor feat = encode_features(images);
	Encoded out;
	if (config_.variant == "rssm") {
		// posterior heads with a zero deterministic state
		Tensor h0 = rssm_initial_h(images.dim(0));
		Tensor q = op::relu(op::dense(op::concat_cols({h0, feat}), params_.get("rssm.post.fc.w"), params_.get("rssm.post.fc.b")));
		out.code.mu = op::dense(q, params_.get("rssm.post.mu.w"), params_.get("rssm.post.mu.b"));
		out.code.logvar = op::clamp(op::dense(q, params_.get("rssm.post.logvar.w"), params_.get("rssm.post.logvar.b")), -10.0f, 10.0f);
	} else {
		out.code.mu = op::dense(feat, params_.get("enc.mu.w"), params_.get("enc.mu.b"));
		out.code.logvar = op::clamp(op::dense(feat, params_.get("enc.logvar.w"), params_.get("enc.logvar.b")), -10.0f, 10.0f);
	}
	out.z = sample_code(out.code, noise);
	return out;
}

WorldModel::Decoded WorldModel::decode(const Tensor& features) const {
	if (features.ndim() != 2 || features.dim(1) != decoder_input_dim()) {
		throw ShapeError("decode: expected [N," + std::to_string(decoder_input_dim()) + "], got " + shape_str(features.shape()));
	}
	const int n = features.dim(0);
	Decoded out;
	if (n_convs_ == 0) {
		Tensor img = op::sigmoid(op::dense(features, params_.get("dec.out.w"), params_.get("dec.out.b")));
		out.image = op::reshape(img, {n, 3, config_.image_h, config_.image_w});
	} else {
		const auto channels = encoder_channels(config_.image_h);
		const int spatial = config_.image_h >> n_convs_;
		Tensor x = op::relu(op::dense(features, params_.get("dec.fc.w"), params_.get("dec.fc.b")));
		x = op::reshape(x, {n, channels.back(), spatial, spatial});
		for (int i = n_convs_ - 1; i >= 1; --i) {
			x = op::relu(op::conv_transpose2d(
				x, params_.get("dec.deconv" + std::to_string(i) + ".w"), params_.get("dec.deconv" + std::to_string(i) + ".b"), 2, 1));
		}
		out.image = op::sigmoid(op::conv_transpose2d(x, params_.get("dec.deconv0.w"), params_.get("dec.deconv0.b"), 2, 1));
	}
	Tensor v = op::relu(op::dense(features, params_.get("dec.vec1.w"), params_.get("dec.vec1.b")));
	out.vec = op::dense(v, params_.get("dec.vec2.w"), params_.get("dec.vec2.b"));
	return out;
}

Tensor WorldModel::predict_transformer(const Tensor& z_seq, const Tensor& a_seq, const Tensor& v_seq) const {
	if (config_.variant != "transformer") throw Error("predict_transformer on a non-transformer model");
	const int t = z_seq.dim(0);
	if (a_seq.dim(0) != t || v_seq.dim(0) != t) {
		throw ShapeError("predict_transformer: sequence lengths disagree");
	}
	if (t > config_.context_len) {
		throw ShapeError("predict_transformer: length " + std::to_string(t) + " exceeds context " + std::to_string(config_.context_len));
	}
	Tensor x = op::add(op::add(op::matmul(z_seq, params_.get("tok.z.w")), op::matmul(a_seq, params_.get("tok.a.w"))),
		op::matmul(v_seq, params_.get("tok.v.w")));
	x = op::bias_add(x, params_.get("tok.b"));
	x = op::add(x, op::slice_rows(params_.get("tok.pos"), 0, t));
	for (int l = 0; l < config_.layers; ++l) {
		const std::string p = "blk" + std::to_string(l) + ".";
		Tensor a_in = op::layernorm(x, params_.get(p + "ln1.g"), params_.get(p + "ln1.b"));
		Tensor att = op::causal_self_attention(a_in, params_.get(p + "attn.wqkv"), params_.get(p + "attn.bqkv"),
			params_.get(p + "attn.wo"), params_.get(p + "attn.bo"), config_.heads);
		x = op::add(x, att);
		Tensor m_in = op::layernorm(x, params_.get(p + "ln2.g"), params_.get(p + "ln2.b"));
		Tensor m = op::dense(op::relu(op::dense(m_in, params_.get(p + "mlp.fc1.w"), params_.get(p + "mlp.fc1.b"))),
			params_.get(p + "mlp.fc2.w"), params_.get(p + "mlp.fc2.b"));
		x = op::add(x, m);
	}
	x = op::layernorm(x, params_.get("head.ln.g"), params_.get("head.ln.b"));
	return op::dense(x, params_.get("head.out.w"), params_.get("head.out.b"));
}

WorldModel::RssmStep WorldModel::predict_rssm(
	const Tensor& prev_h, const Tensor& prev_z, const Tensor& action, const Tensor& vec, const Tensor* features,
	Rng* noise) const {
	if (config_.variant != "rssm") throw Error("predict_rssm on a non-rssm model");
	const int d = config_.rssm_deter;
	Tensor x_in = op::relu(op::dense(op::concat_cols({prev_z, action, vec}), params_.get("rssm.in.w"), params_.get("rssm.in.b")));
	Tensor gx = op::bias_add(op::matmul(x_in, params_.get("rssm.gru.wx")), params_.get("rssm.gru.b"));
	Tensor gh = op::matmul(prev_h, params_.get("rssm.gru.wh"));
	Tensor r = op::sigmoid(op::add(op::slice_cols(gx, 0, d), op::slice_cols(gh, 0, d)));
	Tensor u = op::sigmoid(op::add(op::slice_cols(gx, d, 2 * d), op::slice_cols(gh, d, 2 * d)));
	Tensor cand = op::tanh_op(op::add(op::slice_cols(gx, 2 * d, 3 * d), op::mul(r, op::slice_cols(gh, 2 * d, 3 * d))));
	RssmStep out;
	out.h = op::add(op::mul(u, prev_h), op::mul(op::affine(u, -1.0f, 1.0f), cand));

	Tensor p = op::relu(op::dense(out.h, params_.get("rssm.prior.fc.w"), params_.get("rssm.prior.fc.b")));
	out.prior.mu = op::dense(p, params_.get("rssm.prior.mu.w"), params_.get("rssm.prior.mu.b"));
	out.prior.logvar = op::clamp(op::dense(p, params_.get("rssm.prior.logvar.w"), params_.get("rssm.prior.logvar.b")), -10.0f, 10.0f);
	if (features != nullptr) {
		Tensor q = op::relu(op::dense(op::concat_cols({out.h, *features}), params_.get("rssm.post.fc.w"), params_.get("rssm.post.fc.b")));
		out.posterior.mu = op::dense(q, params_.get("rssm.post.mu.w"), params_.get("rssm.post.mu.b"));
		out.posterior.logvar =
			op::clamp(op::dense(q, params_.get("rssm.post.logvar.w"), params_.get("rssm.post.logvar.b")), -10.0f, 10.0f);
	} else {
		out.posterior = out.prior;
	}
	(void)noise;
	return out;
}

Tensor WorldModel::reward_from(const Tensor& h, const Tensor& z) const {
	if (!config_.reward_head) throw Error("reward_from: model built without a reward head");
	Tensor x = op::relu(op::dense(op::concat_cols({h, z}), params_.get("rew.fc1.w"), params_.get("rew.fc1.b")));
	return op::dense(x, params_.get("rew.fc2.w"), params_.get("rew.fc2.b"));
}

Tensor WorldModel::frames_to_tensor(const std::vector<const uint8_t*>& frames, int h, int w) {
	const int n = static_cast<int>(frames.size());
	Tensor t = Tensor::zeros({n, 3, h, w});
	auto& v = t.values_mut();
	constexpr float kInv = 1.0f / 255.0f;
	for (int i = 0; i < n; ++i) {
		const uint8_t* src = frames[static_cast<size_t>(i)];
		float* dst = v.data() + static_cast<size_t>(i) * 3 * h * w;
		for (int y = 0; y < h; ++y) {
			for (int x = 0; x < w; ++x) {
				const size_t px = static_cast<size_t>(y) * w + x;
				dst[0 * h * w + px] = static_cast<float>(src[px * 3 + 0]) * kInv;
				dst[1 * h * w + px] = static_cast<float>(src[px * 3 + 1]) * kInv;
				dst[2 * h * w + px] = static_cast<float>(src[px * 3 + 2]) * kInv;
			}
		}
	}
	return t;
}

WmLossParts WorldModel::loss(const std::vector<SeqWindow>& windows, Rng* noise) const {
	if (windows.empty()) throw Error("wm loss: empty batch");
	const int k = windows[0].length;
	if (k < 2) throw Error("wm loss: window length must be >= 2, got " + std::to_string(k));
	for (const auto& w : windows) {
		if (w.length != k) throw Error("wm loss: all windows must share one length");
		if (w.start < 0 || w.start + w.length > w.episode->length) throw Error("wm loss: window out of bounds");
	}
	const int b = static_cast<int>(windows.size());
	const int hh = config_.image_h;
	const int ww = config_.image_w;

	WmLossParts parts;
	Tensor eq_total;

	if (config_.variant == "transformer") {
		// window-major frame batch [B*K, ...]
		std::vector<const uint8_t*> frame_ptrs;
		std::vector<const uint8_t*> next_ptrs;
		std::vector<float> vec_data, vec_next_data, act_data, reward_data;
		for (const auto& w : windows) {
			for (int t = 0; t < k; ++t) {
				frame_ptrs.push_back(w.episode->frame(w.start + t));
				const auto v = w.episode->vec(w.start + t);
				vec_data.insert(vec_data.end(), v.begin(), v.end());
				const auto a = w.episode->action(w.start + t);
				act_data.insert(act_data.end(), a.begin(), a.end());
				reward_data.push_back(w.episode->rewards[static_cast<size_t>(w.start + t)]);
				if (t >= 1) {
					next_ptrs.push_back(w.episode->frame(w.start + t));
					const auto nv = w.episode->vec(w.start + t);
					vec_next_data.insert(vec_next_data.end(), nv.begin(), nv.end());
				}
			}
		}
		Tensor images = frames_to_tensor(frame_ptrs, hh, ww);
		Tensor images_next = frames_to_tensor(next_ptrs, hh, ww);
		Tensor vecs = Tensor::from_data({b * k, 2}, std::move(vec_data));
		Tensor vecs_next = Tensor::from_data({b * (k - 1), 2}, std::move(vec_next_data));
		Tensor acts = Tensor::from_data({b * k, 3}, std::move(act_data));

		Encoded enc = encode(images, noise);
		Decoded recon = decode(enc.z);
		Tensor recon_t = op::add(op::mse(recon.image, images), op::mse(recon.vec, vecs));

		std::vector<Tensor> h_pred_rows;
		std::vector<Tensor> h_all_rows;
		for (int i = 0; i < b; ++i) {
			Tensor z_b = op::slice_rows(enc.z, i * k, (i + 1) * k);
			Tensor a_b = op::slice_rows(acts, i * k, (i + 1) * k);
			Tensor v_b = op::slice_rows(vecs, i * k, (i + 1) * k);
			Tensor h_b = predict_transformer(z_b, a_b, v_b);
			h_pred_rows.push_back(op::slice_rows(h_b, 0, k - 1));
			if (config_.reward_head) h_all_rows.push_back(h_b);
		}
		Tensor h_pred = op::concat_rows(h_pred_rows);
		Decoded pred = decode(h_pred);
		Tensor pred_t = op::add(op::mse(pred.image, images_next), op::mse(pred.vec, vecs_next));

		Tensor kl_t = op::gaussian_kl(enc.code.mu, enc.code.logvar);
		eq_total = op::add(op::add(pred_t, recon_t), op::scale(kl_t, config_.kappa));
		parts.prediction = pred_t.item();
		parts.reconstruction = recon_t.item();
		parts.kl = kl_t.item();

		if (config_.reward_head) {
			Tensor h_all = op::concat_rows(h_all_rows);
			Tensor r_hat = reward_from(h_all, enc.z);
			Tensor r_target = Tensor::from_data({b * k, 1}, std::move(reward_data));
			Tensor rew_t = op::mse(r_hat, r_target);
			parts.reward = rew_t.item();
			parts.total = op::add(eq_total, rew_t);
		} else {
			parts.total = eq_total;
		}
	} else {
		// time-major batch: row index t*B + i
		std::vector<const uint8_t*> frame_ptrs;
		std::vector<float> vec_data, reward_data;
		for (int t = 0; t < k; ++t) {
			for (const auto& w : windows) {
				frame_ptrs.push_back(w.episode->frame(w.start + t));
				const auto v = w.episode->vec(w.start + t);
				vec_data.insert(vec_data.end(), v.begin(), v.end());
				reward_data.push_back(w.episode->rewards[static_cast<size_t>(w.start + t)]);
			}
		}
		Tensor images = frames_to_tensor(frame_ptrs, hh, ww);
		Tensor vecs = Tensor::from_data({b * k, 2}, std::move(vec_data));
		Tensor feats = encode_features(images);

		Tensor h = rssm_initial_h(b);
		Tensor z = rssm_initial_z(b);
		Tensor prev_a = Tensor::zeros({b, 3});
		Tensor prev_v = Tensor::zeros({b, 2});
		std::vector<Tensor> state_rows;
		std::vector<Tensor> post_mu_rows, post_lv_rows, prior_mu_rows, prior_lv_rows;
		for (int t = 0; t < k; ++t) {
			Tensor feat_t = op::slice_rows(feats, t * b, (t + 1) * b);
			RssmStep st = predict_rssm(h, z, prev_a, prev_v, &feat_t, noise);
			z = sample_code(st.posterior, noise);
			h = st.h;
			state_rows.push_back(op::concat_cols({h, z}));
			post_mu_rows.push_back(st.posterior.mu);
			post_lv_rows.push_back(st.posterior.logvar);
			prior_mu_rows.push_back(st.prior.mu);
			prior_lv_rows.push_back(st.prior.logvar);
			// inputs for the next step
			std::vector<float> a_data, v_data;
			for (const auto& w : windows) {
				const auto a = w.episode->action(w.start + t);
				a_data.insert(a_data.end(), a.begin(), a.end());
				const auto v = w.episode->vec(w.start + t);
				v_data.insert(v_data.end(), v.begin(), v.end());
			}
			prev_a = Tensor::from_data({b, 3}, std::move(a_data));
			prev_v = Tensor::from_data({b, 2}, std::move(v_data));
		}
		Tensor states = op::concat_rows(state_rows);
		Decoded recon = decode(states);
		Tensor recon_t = op::add(op::mse(recon.image, images), op::mse(recon.vec, vecs));

		Tensor post_mu = op::concat_rows(post_mu_rows);
		Tensor post_lv = op::concat_rows(post_lv_rows);
		Tensor prior_mu = op::concat_rows(prior_mu_rows);
		Tensor prior_lv = op::concat_rows(prior_lv_rows);
		Tensor kl_prior_side = kl_pair(op::detach(post_mu), op::detach(post_lv), prior_mu, prior_lv);
		Tensor kl_post_side = kl_pair(post_mu, post_lv, op::detach(prior_mu), op::detach(prior_lv));
		Tensor kl_t = op::add(op::scale(kl_prior_side, config_.rssm_balance), op::scale(kl_post_side, 1.0f - config_.rssm_balance));

		eq_total = op::add(recon_t, op::scale(kl_t, config_.kappa));
		parts.prediction = 0.0f;
		parts.reconstruction = recon_t.item();
		parts.kl = kl_t.item();

		if (config_.reward_head) {
			Tensor r_hat = reward_from(op::slice_cols(states, 0, config_.rssm_deter),
				op::slice_cols(states, config_.rssm_deter, config_.rssm_deter + config_.rssm_stoch));
			Tensor r_target = Tensor::from_data({b * k, 1}, std::move(reward_data));
			Tensor rew_t = op::mse(r_hat, r_target);
			parts.reward = rew_t.item();
			parts.total = op::add(eq_total, rew_t);
		} else {
			parts.total = eq_total;
		}
	}
	parts.total_value = eq_total.item();
	return parts;
}

void WorldModel::save(const std::string& base_path) const {
	save_checkpoint(params_, base_path);
	std::ofstream f(base_path + ".meta.json");
	if (!f) throw IoError("cannot write model meta " + base_path + ".meta.json");
	f << config_to_json(config_).dump(2) << "\n";
}

WorldModel WorldModel::load(const std::string& base_path) {
	std::ifstream f(base_path + ".meta.json");
	if (!f) throw IoError("cannot open model meta " + base_path + ".meta.json");
	nlohmann::json j;
	try {
		f >> j;
	} catch (const nlohmann::json::exception& ex) {
		throw IoError("bad model meta: " + std::string(ex.what()));
	}
	return WorldModel(config_from_json(j), load_checkpoint(base_path));
}

// ----- dream rollers -----

namespace {

class TransformerRoller final : public DreamRoller {
public:
	explicit TransformerRoller(const WorldModel& wm) : wm_(wm) {}

	void init(const Episode& ep, int start, int context) override {
		if (context < 1 || start < 0 || start + context > ep.length) throw Error("dream: bad context window");
		NoGradGuard ng;
		const auto& cfg = wm_.config();
		std::vector<const uint8_t*> ptrs;
		for (int t = 0; t < context; ++t) ptrs.push_back(ep.frame(start + t));
		Tensor images = WorldModel::frames_to_tensor(ptrs, cfg.image_h, cfg.image_w);
		Tensor z = wm_.encode(images, nullptr).z;
		zs_.clear();
		vs_.clear();
		as_.clear();
		for (int t = 0; t < context; ++t) {
			zs_.emplace_back(z.values().begin() + static_cast<size_t>(t) * cfg.z_dim,
				z.values().begin() + static_cast<size_t>(t + 1) * cfg.z_dim);
			const auto v = ep.vec(start + t);
			vs_.push_back({v[0], v[1]});
			if (t + 1 < context) as_.push_back(ep.action(start + t));
		}
	}

	const std::vector<float>& feature() const override { return zs_.back(); }
	std::array<float, 2> vec() const override { return vs_.back(); }

	Out step(const std::array<float, 3>& action) override {
		NoGradGuard ng;
		const auto& cfg = wm_.config();
		as_.push_back(action);
		// sliding window over the last <= context_len steps
		const int n = static_cast<int>(zs_.size());
		const int t0 = std::max(0, n - cfg.context_len);
		const int t = n - t0;
		std::vector<float> z_data, a_data, v_data;
		for (int i = t0; i < n; ++i) {
			z_data.insert(z_data.end(), zs_[static_cast<size_t>(i)].begin(), zs_[static_cast<size_t>(i)].end());
			a_data.insert(a_data.end(), as_[static_cast<size_t>(i)].begin(), as_[static_cast<size_t>(i)].end());
			v_data.insert(v_data.end(), vs_[static_cast<size_t>(i)].begin(), vs_[static_cast<size_t>(i)].end());
		}
		Tensor h = wm_.predict_transformer(Tensor::from_data({t, cfg.z_dim}, std::move(z_data)),
			Tensor::from_data({t, 3}, std::move(a_data)), Tensor::from_data({t, 2}, std::move(v_data)));
		Tensor h_last = op::slice_rows(h, t - 1, t);
		WorldModel::Decoded dec = wm_.decode(h_last);

		Out out;
		out.image = dec.image.values();
		out.vec = {dec.vec.values()[0], dec.vec.values()[1]};
		if (cfg.reward_head) {
			Tensor z_last = Tensor::from_data({1, cfg.z_dim}, zs_.back());
			out.reward = wm_.reward_from(h_last, z_last).values()[0];
		}
		// feed the prediction back: re-encode the decoded frame
		Tensor z_next = wm_.encode(dec.image, nullptr).z;
		zs_.push_back(z_next.values());
		vs_.push_back(out.vec);
		return out;
	}

private:
	const WorldModel& wm_;
	std::vector<std::vector<float>> zs_;
	std::vector<std::array<float, 2>> vs_;
	std::vector<std::array<float, 3>> as_;
};

class RssmRoller final : public DreamRoller {
public:
	explicit RssmRoller(const WorldModel& wm) : wm_(wm) {}

	void init(const Episode& ep, int start, int context) override {
		if (context < 1 || start < 0 || start + context > ep.length) throw Error("dream: bad context window");
		NoGradGuard ng;
		const auto& cfg = wm_.config();
		h_ = wm_.rssm_initial_h(1);
		z_ = wm_.rssm_initial_z(1);
		std::array<float, 3> prev_a{0.0f, 0.0f, 0.0f};
		std::array<float, 2> prev_v{0.0f, 0.0f};
		for (int t = 0; t < context; ++t) {
			std::vector<const uint8_t*> ptr{ep.frame(start + t)};
			Tensor images = WorldModel::frames_to_tensor(ptr, cfg.image_h, cfg.image_w);
			Tensor feat = wm_.encode_features(images);
			auto st = wm_.predict_rssm(h_, z_, Tensor::from_data({1, 3}, {prev_a[0], prev_a[1], prev_a[2]}),
				Tensor::from_data({1, 2}, {prev_v[0], prev_v[1]}), &feat, nullptr);
			h_ = st.h;
			z_ = st.posterior.mu;
			prev_a = ep.action(start + t);
			const auto v = ep.vec(start + t);
			prev_v = {v[0], v[1]};
			v_ = prev_v;
		}
		feature_.assign(z_.values().begin(), z_.values().end());
	}

	const std::vector<float>& feature() const override { return feature_; }
	std::array<float, 2> vec() const override { return v_; }

	Out step(const std::array<float, 3>& action) override {
		NoGradGuard ng;
		auto st = wm_.predict_rssm(h_, z_, Tensor::from_data({1, 3}, {action[0], action[1], action[2]}),
			Tensor::from_data({1, 2}, {v_[0], v_[1]}), nullptr, nullptr);
		h_ = st.h;
		z_ = st.prior.mu; // dreaming: posterior == prior
		Tensor state = op::concat_cols({h_, z_});
		WorldModel::Decoded dec = wm_.decode(state);
		Out out;
		out.image = dec.image.values();
		out.vec = {dec.vec.values()[0], dec.vec.values()[1]};
		if (wm_.config().reward_head) out.reward = wm_.reward_from(h_, z_).values()[0];
		v_ = out.vec;
		feature_.assign(z_.values().begin(), z_.values().end());
		return out;
	}

private:
	const WorldModel& wm_;
	Tensor h_, z_;
	std::array<float, 2> v_{0.0f, 0.0f};
	std::vector<float> feature_;
};

} // namespace

std::unique_ptr<DreamRoller> make_dream_roller(const WorldModel& wm) {
	if (wm.config().variant == "rssm") return std::make_unique<RssmRoller>(wm);
	return std::make_unique<TransformerRoller>(wm);
}

DreamResult dream(
	const WorldModel& wm, const Episode& ep, int start, int context, const std::vector<std::array<float, 3>>& actions) {
	if (actions.empty()) throw Error("dream: need at least one future action");
	auto roller = make_dream_roller(wm);
	roller->init(ep, start, context);
	DreamResult out;
	out.h = wm.config().image_h;
	out.w = wm.config().image_w;
	for (const auto& a : actions) {
		auto step = roller->step(a);
		out.images.push_back(std::move(step.image));
		out.vectors.push_back(step.vec);
	}
	return out;
}

// ----- offline training -----

namespace {

struct WindowIndex {
	std::vector<SeqWindow> windows;

	static WindowIndex build(const Dataset& data, int k) {
		WindowIndex idx;
		for (const auto& ep : data.episodes) {
			if (ep.length < k) continue;
			for (int s = 0; s + k <= ep.length; ++s) idx.windows.push_back({&ep, s, k});
		}
		return idx;
	}
};

} // namespace

void build_image_encoder(ParamSet& params, int image_h, int out_dim, Rng& rng) {
	const auto channels = encoder_channels(image_h);
	int c_in = 3;
	for (size_t i = 0; i < channels.size(); ++i) {
		const int c_out = channels[i];
		params.add_kaiming("enc.conv" + std::to_string(i) + ".w", {c_out, c_in, 4, 4}, c_in * 16, rng);
		params.add_zeros("enc.conv" + std::to_string(i) + ".b", {c_out});
		c_in = c_out;
	}
	const int spatial = image_h >> channels.size();
	const int flat = (channels.empty() ? 3 : channels.back()) * spatial * spatial;
	params.add_kaiming("enc.mu.w", {flat, out_dim}, flat, rng);
	params.add_zeros("enc.mu.b", {out_dim});
}

Tensor image_encoder_forward(const ParamSet& params, int image_h, const Tensor& images) {
	const auto channels = encoder_channels(image_h);
	Tensor x = images;
	for (size_t i = 0; i < channels.size(); ++i) {
		x = op::relu(op::conv2d(
			x, params.get("enc.conv" + std::to_string(i) + ".w"), params.get("enc.conv" + std::to_string(i) + ".b"), 2, 1));
	}
	const int spatial = image_h >> channels.size();
	const int flat = (channels.empty() ? 3 : channels.back()) * spatial * spatial;
	x = op::reshape(x, {images.dim(0), flat});
	return op::dense(x, params.get("enc.mu.w"), params.get("enc.mu.b"));
}

TrainWmResult train_wm(WorldModel& wm, const Dataset& train, const Dataset& val, const TrainWmConfig& config,
	uint64_t seed, const std::string& ckpt_base, const std::string& log_csv) {
	if (train.episodes.empty()) throw Error("train_wm: empty training dataset");
	const int k = wm.config().context_len;
	WindowIndex train_idx = WindowIndex::build(train, k);
	WindowIndex val_idx = WindowIndex::build(val, k);
	if (train_idx.windows.empty()) {
		throw Error("train_wm: no training episode is long enough for context " + std::to_string(k));
	}

	// fixed, evenly-strided validation windows
	std::vector<SeqWindow> val_windows;
	if (!val_idx.windows.empty()) {
		const size_t stride = std::max<size_t>(1, val_idx.windows.size() / static_cast<size_t>(config.val_windows));
		for (size_t i = 0; i < val_idx.windows.size() && val_windows.size() < static_cast<size_t>(config.val_windows); i += stride) {
			val_windows.push_back(val_idx.windows[i]);
		}
	}

	std::ofstream log(log_csv);
	if (!log) throw IoError("train_wm: cannot write " + log_csv);
	log << "step,total,prediction,reconstruction,kl,reward,validation\n";

	Rng rng(seed);
	auto validate = [&]() {
		if (val_windows.empty()) return 0.0f;
		NoGradGuard ng;
		double acc = 0.0;
		size_t i = 0;
		while (i < val_windows.size()) {
			const size_t n = std::min<size_t>(static_cast<size_t>(config.batch_size), val_windows.size() - i);
			std::vector<SeqWindow> batch(val_windows.begin() + static_cast<long>(i), val_windows.begin() + static_cast<long>(i + n));
			acc += static_cast<double>(wm.loss(batch, nullptr).total_value) * static_cast<double>(n);
			i += n;
		}
		return static_cast<float>(acc / val_windows.size());
	};

	TrainWmResult result;
	std::map<std::string, std::vector<float>> best;
	float best_val = std::numeric_limits<float>::infinity();
	int best_step = 0;
	auto snapshot = [&](int step, float v) {
		best_val = v;
		best_step = step;
		best.clear();
		for (const auto& [name, e] : wm.params().entries()) best[name] = e.param.values();
	};
	auto restore_best = [&]() {
		if (best.empty()) return;
		for (auto& [name, e] : wm.params().entries_mut()) e.param.values_mut() = best[name];
	};

	double first_acc = 0.0, last_acc = 0.0;
	int first_n = 0, last_n = 0;
	const int window_count = static_cast<int>(train_idx.windows.size());

	try {
		for (int step = 1; step <= config.steps; ++step) {
			std::vector<SeqWindow> batch;
			batch.reserve(static_cast<size_t>(config.batch_size));
			for (int i = 0; i < config.batch_size; ++i) {
				batch.push_back(train_idx.windows[static_cast<size_t>(rng.below(window_count))]);
			}
			wm.params().zero_grad();
			WmLossParts parts = wm.loss(batch, &rng);
			parts.total.backward();
			adam_step(wm.params(), config.lr, step);

			if (step <= 50) {
				first_acc += parts.total_value;
				++first_n;
			}
			if (step > config.steps - 50) {
				last_acc += parts.total_value;
				++last_n;
			}

			const bool do_val = step % config.val_interval == 0 || step == config.steps;
			std::string val_field;
			if (do_val) {
				const float v = validate();
				val_field = std::to_string(v);
				if (v < best_val) snapshot(step, v);
			}
			if (step % config.log_interval == 0 || do_val || step == 1) {
				log << step << "," << parts.total_value << "," << parts.prediction << "," << parts.reconstruction << ","
					<< parts.kl << "," << parts.reward << "," << val_field << "\n";
			}
		}
	} catch (const NumericError& e) {
		restore_best();
		if (!best.empty()) wm.save(ckpt_base);
		log.flush();
		throw NumericError(std::string("train_wm aborted: ") + e.what() + (best.empty() ? "" : "; last good checkpoint saved"));
	}

	if (best.empty()) snapshot(config.steps, validate());
	restore_best();
	wm.save(ckpt_base);
	result.best_val = best_val;
	result.best_step = best_step;
	result.first_train_loss = first_n ? static_cast<float>(first_acc / first_n) : 0.0f;
	result.last_train_loss = last_n ? static_cast<float>(last_acc / last_n) : 0.0f;
	return result;
}

} // namespace navmini
