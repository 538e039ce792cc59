#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "navmini/dataset.hpp"
#include "navmini/error.hpp"
#include "navmini/eval.hpp"
#include "navmini/ops.hpp"
#include "navmini/probe.hpp"

using namespace navmini;
namespace op = navmini::ops;
namespace fs = std::filesystem;

namespace {

Episode constant_episode(int t, int h, int w, uint8_t value) {
	Episode ep;
	ep.length = t;
	ep.height = h;
	ep.width = w;
	ep.frames.assign(static_cast<size_t>(t) * h * w * 3, value);
	for (int i = 0; i < t; ++i) {
		ep.vectors.push_back(2.0f);
		ep.vectors.push_back(-1.0f);
		ep.actions.push_back(0.0f);
		ep.actions.push_back(0.0f);
		ep.actions.push_back(0.0f);
		ep.rewards.push_back(0.0f);
		ep.dones.push_back(i == t - 1 ? 1 : 0);
	}
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

} // namespace

TEST_CASE("grey baseline closed form on all-white frames") {
	Dataset d;
	d.manifest.height = 8;
	d.manifest.width = 8;
	d.episodes.push_back(constant_episode(12, 8, 8, 255));
	DreamErrorCurve c = baseline_errors(d, 4, 3, 0);
	for (float v : c.grey_image) CHECK(v == doctest::Approx(0.25f).epsilon(1e-5));
}

TEST_CASE("grey baseline is near zero on mid-grey frames") {
	Dataset d;
	d.manifest.height = 8;
	d.manifest.width = 8;
	d.episodes.push_back(constant_episode(12, 8, 8, 128)); // 128/255 is the closest u8 to 0.5
	DreamErrorCurve c = baseline_errors(d, 4, 3, 0);
	for (float v : c.grey_image) CHECK(v < 1e-5f);
}

TEST_CASE("static baseline is exactly zero on a static scene") {
	Dataset d;
	d.manifest.height = 8;
	d.manifest.width = 8;
	d.episodes.push_back(constant_episode(12, 8, 8, 77));
	DreamErrorCurve c = baseline_errors(d, 4, 4, 0);
	for (float v : c.static_image) CHECK(v == 0.0f);
	for (float v : c.static_vector) CHECK(v == 0.0f);
}

TEST_CASE("grey vector baseline is the squared goal norm over two") {
	Dataset d;
	d.manifest.height = 8;
	d.manifest.width = 8;
	d.episodes.push_back(constant_episode(12, 8, 8, 0));
	DreamErrorCurve c = baseline_errors(d, 4, 2, 0);
	for (float v : c.grey_vector) CHECK(v == doctest::Approx((4.0f + 1.0f) / 2.0f));
}

TEST_CASE("a perfect prediction scores zero frame error") {
	Episode ep = constant_episode(4, 8, 8, 200);
	std::vector<float> perfect(static_cast<size_t>(3) * 8 * 8, 200.0f / 255.0f);
	CHECK(frame_mse(perfect, ep.frame(0), 8, 8) == doctest::Approx(0.0).epsilon(1e-12));
	std::vector<float> off(static_cast<size_t>(3) * 8 * 8, 100.0f / 255.0f);
	CHECK(frame_mse(off, ep.frame(0), 8, 8) > 0.1);
}

TEST_CASE("single-step horizon yields one curve entry, short episodes are skipped") {
	Dataset d;
	d.manifest.height = 8;
	d.manifest.width = 8;
	d.episodes.push_back(constant_episode(12, 8, 8, 10));
	d.episodes.push_back(constant_episode(3, 8, 8, 10)); // shorter than context+n
	DreamErrorCurve c = baseline_errors(d, 4, 1, 0);
	CHECK(c.grey_image.size() == 1);
	CHECK(c.windows_skipped == 1);
	// all episodes too short -> rejected
	Dataset tiny;
	tiny.manifest.height = 8;
	tiny.manifest.width = 8;
	tiny.episodes.push_back(constant_episode(3, 8, 8, 10));
	CHECK_THROWS_AS(baseline_errors(tiny, 4, 4, 0), Error);
}

TEST_CASE("nstep dream error runs a real model over validation windows") {
	WorldModelConfig wc;
	wc.z_dim = 8;
	wc.embed_dim = 8;
	wc.layers = 1;
	wc.heads = 2;
	wc.context_len = 4;
	wc.image_h = 8;
	wc.image_w = 8;
	WorldModel wm(wc, 3);
	Dataset d;
	d.manifest.height = 8;
	d.manifest.width = 8;
	d.episodes.push_back(constant_episode(10, 8, 8, 128));
	DreamErrorCurve c = nstep_dream_error(wm, d, 3, 2, 4);
	CHECK(c.image_mse.size() == 2);
	CHECK(c.windows_used == 4);
	for (float v : c.image_mse) CHECK(v >= 0.0f);
	// deterministic across calls
	DreamErrorCurve c2 = nstep_dream_error(wm, d, 3, 2, 4);
	CHECK(c.image_mse == c2.image_mse);
}

TEST_CASE("uniform class probability scores ln 2 per pixel-class") {
	Tensor logits = Tensor::zeros({2, 5, 4, 4});
	Tensor targets = Tensor::zeros({2, 5, 4, 4});
	Rng rng(3);
	for (auto& v : targets.values_mut()) v = rng.uniform() < 0.2f ? 1.0f : 0.0f;
	CHECK(op::bce_with_logits(logits, targets).item() == doctest::Approx(std::log(2.0f)).epsilon(1e-5));
}

TEST_CASE("proportional depth error closed forms") {
	// pred == gt -> 0; pred == 2*gt -> 1 on foreground pixels
	Tensor gt = Tensor::from_data({1, 1, 2, 2}, {2.0f, 4.0f, 8.0f, 20.0f});
	Tensor inv = Tensor::from_data({1, 1, 2, 2}, {0.5f, 0.25f, 0.125f, 0.0f}); // last pixel background
	const int fg = 3;
	auto prop_mse = [&](const Tensor& pred) {
		Tensor prop = op::mul(op::sub(pred, gt), inv);
		return op::scale(op::sum_all(op::mul(prop, prop)), 1.0f / fg).item();
	};
	CHECK(prop_mse(gt) == 0.0f);
	Tensor twice = op::scale(gt, 2.0f);
	CHECK(prop_mse(twice) == doctest::Approx(1.0f).epsilon(1e-5));
}

TEST_CASE("probe decoders share one architecture across sources") {
	TempDir dir("navmini_probe_ds");
	CollectConfig cc;
	cc.episodes = 4;
	cc.scenarios = {Scenario::kSimple};
	cc.difficulty_schedule = {1.0f};
	cc.camera.width = 16;
	cc.camera.height = 16;
	cc.store_ground_truth = true;
	collect(cc, 11, dir.path.string());
	LabeledDataset labeled = LabeledDataset::load(dir.path.string());

	ProbeTrainConfig pc;
	pc.steps = 30;
	pc.batch = 4;
	pc.test_fraction = 0.25f;

	// two frozen random encoders with different seeds
	ParamSet enc_a, enc_b;
	Rng ra(1), rb(2);
	build_image_encoder(enc_a, 16, 8, ra);
	build_image_encoder(enc_b, 16, 8, rb);
	ProbeSource sa{"random-a", 8, [&](const Tensor& im) { NoGradGuard ng; return image_encoder_forward(enc_a, 16, im); }, nullptr};
	ProbeSource sb{"random-b", 8, [&](const Tensor& im) { NoGradGuard ng; return image_encoder_forward(enc_b, 16, im); }, nullptr};
	ProbeResult pa = probe(sa, labeled, pc, 5);
	ProbeResult pb = probe(sb, labeled, pc, 5);
	CHECK(pa.decoder_params == pb.decoder_params);
	CHECK(pa.seg_bce > 0.0f);
	CHECK(pa.depth_prop_mse > 0.0f);

	// joint mode trains the encoder
	ParamSet enc_j;
	Rng rj(3);
	build_image_encoder(enc_j, 16, 8, rj);
	const uint64_t before = enc_j.checksum();
	ProbeSource sj{"joint", 8, [&](const Tensor& im) { return image_encoder_forward(enc_j, 16, im); }, &enc_j};
	ProbeResult pj = probe(sj, labeled, pc, 5);
	CHECK(pj.decoder_params == pa.decoder_params);
	CHECK(enc_j.checksum() != before);
	// frozen sources stay frozen
	CHECK(enc_a.checksum() == ParamSet(enc_a).checksum());
}

TEST_CASE("probe rejects datasets without ground truth") {
	TempDir dir("navmini_probe_nogt");
	CollectConfig cc;
	cc.episodes = 2;
	cc.scenarios = {Scenario::kSimple};
	cc.difficulty_schedule = {0.0f};
	cc.camera.width = 16;
	cc.camera.height = 16;
	collect(cc, 3, dir.path.string());
	CHECK_THROWS_AS(LabeledDataset::load(dir.path.string()), IoError);
}

TEST_CASE("policy evaluation is reproducible and bounded") {
	WorldModelConfig wc;
	wc.z_dim = 8;
	wc.embed_dim = 8;
	wc.layers = 1;
	wc.heads = 2;
	wc.context_len = 4;
	wc.image_h = 16;
	wc.image_w = 16;
	WorldModel wm(wc, 7);

	PolicyBundle bundle;
	bundle.config.feature_dim = 8;
	bundle.config.seq_len = 1;
	bundle.config.hidden = 16;
	bundle.feature_source = "frozen-wm";
	bundle.image_h = 16;
	Rng rng(9);
	build_policy_params(bundle.params, bundle.config, rng);

	EnvConfig env;
	env.camera.width = 16;
	env.camera.height = 16;
	PolicyEvalResult a = evaluate_policy(bundle, &wm, env, 0.0f, 5, 42);
	PolicyEvalResult b = evaluate_policy(bundle, &wm, env, 0.0f, 5, 42);
	CHECK(a.success_rate == b.success_rate);
	CHECK(a.events == b.events);
	CHECK(a.success_rate >= 0.0f);
	CHECK(a.success_rate <= 1.0f);
	CHECK(a.events.size() == 5);
}

TEST_CASE("dream filmstrip writes a png") {
	WorldModelConfig wc;
	wc.z_dim = 8;
	wc.embed_dim = 8;
	wc.layers = 1;
	wc.heads = 2;
	wc.context_len = 4;
	wc.image_h = 8;
	wc.image_w = 8;
	WorldModel wm(wc, 3);
	Episode ep = constant_episode(10, 8, 8, 90);
	const std::string png = (fs::temp_directory_path() / "navmini_strip.png").string();
	save_dream_filmstrip(wm, ep, 0, 3, 4, png);
	CHECK(fs::exists(png));
	CHECK(fs::file_size(png) > 100);
	fs::remove(png);
}
