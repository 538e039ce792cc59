#include "navmini/probe.hpp"

#include <filesystem>

#include "navmini/error.hpp"
#include "navmini/image_io.hpp"
#include "navmini/ops.hpp"
#include "navmini/renderer.hpp"
#include "navmini/world_model.hpp"

namespace op = navmini::ops;
namespace fs = std::filesystem;

namespace navmini {

LabeledDataset LabeledDataset::load(const std::string& dir) {
	LabeledDataset out;
	out.data = Dataset::load(dir);
	if (!out.data.manifest.has_ground_truth) {
		throw IoError("dataset in " + dir + " has no depth/label ground truth (collect with store_ground_truth)");
	}
	for (const auto& e : out.data.manifest.episodes) {
		auto depth = read_f32_blob((fs::path(dir) / (e.file + ".depth")).string());
		auto labels = read_u8_blob((fs::path(dir) / (e.file + ".labels")).string());
		const size_t expected = static_cast<size_t>(e.length) * out.data.manifest.height * out.data.manifest.width;
		if (depth.size() != expected || labels.size() != expected) {
			throw IoError("ground-truth size mismatch for " + e.file);
		}
		out.depth.push_back(std::move(depth));
		out.labels.push_back(std::move(labels));
	}
	return out;
}

namespace {

// decoder layout mirrors the world-model image decoder: fc to a 4x4 map,
// transposed convs upsampling, then two parallel output deconvs
struct ProbeDecoder {
	ParamSet params;
	int image_h;
	int n_convs;
	std::vector<int> channels;

	ProbeDecoder(int feature_dim, int image_h_, uint64_t seed) : image_h(image_h_) {
		Rng rng(seed);
		int l = 0;
		while ((1 << l) < image_h) ++l;
		n_convs = std::max(1, l - 2);
		for (int i = 0; i < n_convs; ++i) channels.push_back(std::min(256, 32 << i));
		const int spatial = image_h >> n_convs;
		params.add_kaiming("probe.fc.w", {feature_dim, channels.back() * spatial * spatial}, feature_dim, rng);
		params.add_zeros("probe.fc.b", {channels.back() * spatial * spatial});
		for (int i = n_convs - 1; i >= 1; --i) {
			const int from = channels[static_cast<size_t>(i)];
			const int to = channels[static_cast<size_t>(i - 1)];
			params.add_kaiming("probe.deconv" + std::to_string(i) + ".w", {from, to, 4, 4}, from * 16, rng);
			params.add_zeros("probe.deconv" + std::to_string(i) + ".b", {to});
		}
		// parallel heads from the last hidden map
		params.add_kaiming("probe.seg.w", {channels[0], kProbeClasses, 4, 4}, channels[0] * 16, rng);
		params.add_zeros("probe.seg.b", {kProbeClasses});
		params.add_kaiming("probe.depth.w", {channels[0], 1, 4, 4}, channels[0] * 16, rng);
		params.add_zeros("probe.depth.b", {1});
	}

	struct Out {
		Tensor seg_logits; // [N, classes, H, W]
		Tensor depth;      // [N, 1, H, W], positive
	};

	Out forward(const Tensor& features) const {
		const int n = features.dim(0);
		const int spatial = image_h >> n_convs;
		Tensor x = op::relu(op::dense(features, params.get("probe.fc.w"), params.get("probe.fc.b")));
		x = op::reshape(x, {n, channels.back(), spatial, spatial});
		for (int i = n_convs - 1; i >= 1; --i) {
			x = op::relu(op::conv_transpose2d(
				x, params.get("probe.deconv" + std::to_string(i) + ".w"), params.get("probe.deconv" + std::to_string(i) + ".b"), 2, 1));
		}
		Out out;
		out.seg_logits = op::conv_transpose2d(x, params.get("probe.seg.w"), params.get("probe.seg.b"), 2, 1);
		out.depth = op::softplus(op::conv_transpose2d(x, params.get("probe.depth.w"), params.get("probe.depth.b"), 2, 1));
		return out;
	}
};

struct FrameRef {
	int episode = 0;
	int t = 0;
};

struct ProbeTargets {
	Tensor one_hot;   // [N, classes, H, W]
	Tensor depth;     // [N, 1, H, W]
	Tensor inv_depth; // [N, 1, H, W]; 1/depth on foreground, 0 on background
	int fg_count = 0;
};

ProbeTargets make_targets(const LabeledDataset& data, const std::vector<FrameRef>& refs) {
	const int h = data.height();
	const int w = data.width();
	const int n = static_cast<int>(refs.size());
	const size_t plane = static_cast<size_t>(h) * w;
	ProbeTargets out;
	out.one_hot = Tensor::zeros({n, kProbeClasses, h, w});
	out.depth = Tensor::zeros({n, 1, h, w});
	out.inv_depth = Tensor::zeros({n, 1, h, w});
	auto& oh = out.one_hot.values_mut();
	auto& dv = out.depth.values_mut();
	auto& iv = out.inv_depth.values_mut();
	for (int i = 0; i < n; ++i) {
		const auto& r = refs[static_cast<size_t>(i)];
		const uint8_t* labels = data.labels[static_cast<size_t>(r.episode)].data() + static_cast<size_t>(r.t) * plane;
		const float* depth = data.depth[static_cast<size_t>(r.episode)].data() + static_cast<size_t>(r.t) * plane;
		for (size_t p = 0; p < plane; ++p) {
			oh[(static_cast<size_t>(i) * kProbeClasses + labels[p]) * plane + p] = 1.0f;
			dv[static_cast<size_t>(i) * plane + p] = depth[p];
			if (labels[p] != static_cast<uint8_t>(SurfaceClass::kBackground)) {
				iv[static_cast<size_t>(i) * plane + p] = 1.0f / depth[p];
				++out.fg_count;
			}
		}
	}
	return out;
}

Tensor frames_tensor(const LabeledDataset& data, const std::vector<FrameRef>& refs) {
	std::vector<const uint8_t*> ptrs;
	for (const auto& r : refs) ptrs.push_back(data.data.episodes[static_cast<size_t>(r.episode)].frame(r.t));
	return WorldModel::frames_to_tensor(ptrs, data.height(), data.width());
}

// masked proportional depth error: mean over foreground of ((pred-gt)/gt)^2
Tensor depth_loss(const Tensor& pred, const ProbeTargets& targets) {
	Tensor prop = op::mul(op::sub(pred, targets.depth), targets.inv_depth);
	return op::scale(op::sum_all(op::mul(prop, prop)), 1.0f / std::max(1, targets.fg_count));
}

} // namespace

ProbeResult probe(const ProbeSource& source, const LabeledDataset& labeled, const ProbeTrainConfig& config, uint64_t seed) {
	if (labeled.data.episodes.empty()) throw Error("probe: empty dataset");
	Rng rng(seed);

	// episode-level train/test split
	auto [train_m, test_m] = split(labeled.data.manifest, config.test_fraction, seed ^ 0x5f5f5f5full);
	std::vector<FrameRef> train_refs, test_refs;
	for (size_t e = 0; e < labeled.data.episodes.size(); ++e) {
		const std::string& file = labeled.data.manifest.episodes[e].file;
		const bool in_test = std::any_of(test_m.episodes.begin(), test_m.episodes.end(),
			[&](const ManifestEntry& me) { return me.file == file; });
		for (int t = 0; t < labeled.data.episodes[e].length; ++t) {
			(in_test ? test_refs : train_refs).push_back({static_cast<int>(e), t});
		}
	}
	if (train_refs.empty() || test_refs.empty()) throw Error("probe: split produced an empty side");

	ProbeDecoder decoder(source.feature_dim, labeled.height(), seed ^ 0xdec0deull);

	ProbeResult result;
	result.source = source.name;
	result.decoder_params = decoder.params.total_params();

	int opt_step = 0;
	double first_acc = 0.0, last_acc = 0.0;
	int first_n = 0, last_n = 0;
	for (int step = 1; step <= config.steps; ++step) {
		std::vector<FrameRef> refs;
		for (int i = 0; i < config.batch; ++i) {
			refs.push_back(train_refs[static_cast<size_t>(rng.below(static_cast<int>(train_refs.size())))]);
		}
		Tensor images = frames_tensor(labeled, refs);
		ProbeTargets targets = make_targets(labeled, refs);
		Tensor features = source.features(images);
		ProbeDecoder::Out out = decoder.forward(features);
		Tensor loss = op::add(op::bce_with_logits(out.seg_logits, targets.one_hot), depth_loss(out.depth, targets));

		decoder.params.zero_grad();
		if (source.trainable) source.trainable->zero_grad();
		loss.backward();
		opt_step += 1;
		adam_step(decoder.params, config.lr, opt_step);
		if (source.trainable) adam_step(*source.trainable, config.lr, opt_step);

		if (step <= 25) {
			first_acc += loss.item();
			++first_n;
		}
		if (step > config.steps - 25) {
			last_acc += loss.item();
			++last_n;
		}
	}
	result.train_loss_first = first_n ? static_cast<float>(first_acc / first_n) : 0.0f;
	result.train_loss_last = last_n ? static_cast<float>(last_acc / last_n) : 0.0f;

	// test metrics
	NoGradGuard ng;
	double bce_acc = 0.0;
	double depth_acc = 0.0;
	int64_t bce_n = 0, depth_n = 0;
	size_t i = 0;
	while (i < test_refs.size()) {
		const size_t m = std::min<size_t>(static_cast<size_t>(config.batch), test_refs.size() - i);
		std::vector<FrameRef> refs(test_refs.begin() + static_cast<long>(i), test_refs.begin() + static_cast<long>(i + m));
		Tensor images = frames_tensor(labeled, refs);
		ProbeTargets targets = make_targets(labeled, refs);
		ProbeDecoder::Out out = decoder.forward(source.features(images));
		const int64_t elems = static_cast<int64_t>(out.seg_logits.numel());
		bce_acc += static_cast<double>(op::bce_with_logits(out.seg_logits, targets.one_hot).item()) * static_cast<double>(elems);
		bce_n += elems;
		depth_acc += static_cast<double>(depth_loss(out.depth, targets).item()) * targets.fg_count;
		depth_n += targets.fg_count;
		i += m;
	}
	result.seg_bce = static_cast<float>(bce_acc / static_cast<double>(bce_n));
	result.depth_prop_mse = static_cast<float>(depth_acc / static_cast<double>(std::max<int64_t>(1, depth_n)));
	return result;
}

} // namespace navmini
