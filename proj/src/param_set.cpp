#include "navmini/param_set.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "navmini/error.hpp"

namespace navmini {

Tensor ParamSet::add(const std::string& name, Tensor init) {
	if (entries_.count(name)) throw Error("ParamSet: duplicate parameter name '" + name + "'");
	init.node()->requires_grad = true;
	Entry e;
	e.param = init;
	e.m.assign(static_cast<size_t>(init.numel()), 0.0f);
	e.v.assign(static_cast<size_t>(init.numel()), 0.0f);
	entries_.emplace(name, std::move(e));
	return init;
}

Tensor ParamSet::get(const std::string& name) const {
	auto it = entries_.find(name);
	if (it == entries_.end()) throw Error("ParamSet: no parameter named '" + name + "'");
	return it->second.param;
}

Tensor ParamSet::add_kaiming(const std::string& name, Shape shape, int fan_in, Rng& rng) {
	const float std_dev = std::sqrt(2.0f / static_cast<float>(fan_in));
	Tensor t = Tensor::zeros(shape);
	for (auto& v : t.values_mut()) v = rng.normal(0.0f, std_dev);
	return add(name, t);
}

Tensor ParamSet::add_normal(const std::string& name, Shape shape, float std_dev, Rng& rng) {
	Tensor t = Tensor::zeros(shape);
	for (auto& v : t.values_mut()) v = rng.normal(0.0f, std_dev);
	return add(name, t);
}

Tensor ParamSet::add_uniform(const std::string& name, Shape shape, float lo, float hi, Rng& rng) {
	Tensor t = Tensor::zeros(shape);
	for (auto& v : t.values_mut()) v = rng.uniform(lo, hi);
	return add(name, t);
}

Tensor ParamSet::add_zeros(const std::string& name, Shape shape) { return add(name, Tensor::zeros(std::move(shape))); }

Tensor ParamSet::add_ones(const std::string& name, Shape shape) { return add(name, Tensor::full(std::move(shape), 1.0f)); }

void ParamSet::zero_grad() {
	for (auto& [name, e] : entries_) e.param.zero_grad();
}

int64_t ParamSet::total_params() const {
	int64_t n = 0;
	for (const auto& [name, e] : entries_) n += e.param.numel();
	return n;
}

uint64_t ParamSet::checksum() const {
	uint64_t h = 1469598103934665603ull;
	auto mix = [&h](const void* data, size_t len) {
		const auto* p = static_cast<const unsigned char*>(data);
		for (size_t i = 0; i < len; ++i) {
			h ^= p[i];
			h *= 1099511628211ull;
		}
	};
	for (const auto& [name, e] : entries_) {
		mix(name.data(), name.size());
		mix(e.param.values().data(), e.param.values().size() * sizeof(float));
	}
	return h;
}

void adam_step(ParamSet& params, float lr, float beta1, float beta2, float eps, int step) {
	if (step < 1) throw Error("adam_step: step must be >= 1");
	const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
	const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
	for (auto& [name, e] : params.entries_mut()) {
		auto& grad = e.param.grad_mut();
		auto& value = e.param.values_mut();
		for (size_t i = 0; i < value.size(); ++i) {
			const float g = grad[i];
			if (!std::isfinite(g)) {
				throw NumericError("adam_step: non-finite gradient in parameter '" + name + "'");
			}
			e.m[i] = beta1 * e.m[i] + (1.0f - beta1) * g;
			e.v[i] = beta2 * e.v[i] + (1.0f - beta2) * g * g;
			const float m_hat = e.m[i] / bc1;
			const float v_hat = e.v[i] / bc2;
			value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
		}
	}
}

void save_checkpoint(const ParamSet& params, const std::string& base_path) {
	nlohmann::json manifest;
	manifest["format"] = "paramset";
	manifest["version"] = 1;
	manifest["dtype"] = "f32";
	nlohmann::json entries = nlohmann::json::object();
	size_t offset = 0;
	for (const auto& [name, e] : params.entries()) {
		nlohmann::json rec;
		rec["shape"] = e.param.shape();
		rec["dtype"] = "f32";
		rec["offset"] = offset;
		entries[name] = rec;
		offset += e.param.values().size() * sizeof(float);
	}
	manifest["entries"] = entries;
	manifest["blob_bytes"] = offset;

	std::ofstream jf(base_path + ".json");
	if (!jf) throw IoError("cannot write checkpoint manifest " + base_path + ".json");
	jf << manifest.dump(2) << "\n";
	jf.close();

	std::ofstream bf(base_path + ".bin", std::ios::binary);
	if (!bf) throw IoError("cannot write checkpoint blob " + base_path + ".bin");
	for (const auto& [name, e] : params.entries()) {
		bf.write(reinterpret_cast<const char*>(e.param.values().data()),
			static_cast<std::streamsize>(e.param.values().size() * sizeof(float)));
	}
	if (!bf) throw IoError("short write to checkpoint blob " + base_path + ".bin");
}

ParamSet load_checkpoint(const std::string& base_path) {
	std::ifstream jf(base_path + ".json");
	if (!jf) throw IoError("cannot open checkpoint manifest " + base_path + ".json");
	nlohmann::json manifest;
	try {
		jf >> manifest;
	} catch (const nlohmann::json::exception& ex) {
		throw IoError("bad checkpoint manifest " + base_path + ".json: " + ex.what());
	}
	if (manifest.value("format", "") != "paramset") throw IoError("not a parameter checkpoint: " + base_path);

	std::ifstream bf(base_path + ".bin", std::ios::binary);
	if (!bf) throw IoError("cannot open checkpoint blob " + base_path + ".bin");
	std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
	const size_t expected = manifest.value("blob_bytes", size_t{0});
	if (blob.size() != expected) {
		throw IoError("checkpoint blob size " + std::to_string(blob.size()) + " != manifest blob_bytes " + std::to_string(expected));
	}

	ParamSet params;
	for (auto it = manifest["entries"].begin(); it != manifest["entries"].end(); ++it) {
		const auto& rec = it.value();
		Shape shape = rec["shape"].get<Shape>();
		const size_t offset = rec["offset"].get<size_t>();
		const size_t bytes = static_cast<size_t>(shape_numel(shape)) * sizeof(float);
		if (offset + bytes > blob.size()) {
			throw IoError("checkpoint entry '" + it.key() + "' overruns blob at offset " + std::to_string(offset));
		}
		std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
		std::memcpy(data.data(), blob.data() + offset, bytes);
		params.add(it.key(), Tensor::from_data(std::move(shape), std::move(data)));
	}
	return params;
}

} // namespace navmini
