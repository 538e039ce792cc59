#include "navmini/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "navmini/error.hpp"

namespace navmini {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
	out.push_back(static_cast<uint8_t>(v >> 24));
	out.push_back(static_cast<uint8_t>(v >> 16));
	out.push_back(static_cast<uint8_t>(v >> 8));
	out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
	std::vector<uint8_t> head;
	put_u32_be(head, static_cast<uint32_t>(data.size()));
	f.write(reinterpret_cast<const char*>(head.data()), 4);
	f.write(type, 4);
	if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
	uint32_t crc = crc32(0L, Z_NULL, 0);
	crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
	if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
	std::vector<uint8_t> tail;
	put_u32_be(tail, crc);
	f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

} // namespace

void write_png(const std::string& path, int height, int width, const std::vector<uint8_t>& rgb) {
	if (static_cast<size_t>(height) * width * 3 != rgb.size()) {
		throw IoError("write_png: buffer size does not match " + std::to_string(height) + "x" + std::to_string(width));
	}
	std::ofstream f(path, std::ios::binary);
	if (!f) throw IoError("write_png: cannot open " + path);
	static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
	f.write(reinterpret_cast<const char*>(sig), 8);

	std::vector<uint8_t> ihdr;
	put_u32_be(ihdr, static_cast<uint32_t>(width));
	put_u32_be(ihdr, static_cast<uint32_t>(height));
	ihdr.push_back(8); // bit depth
	ihdr.push_back(2); // color type: truecolor
	ihdr.push_back(0); // compression
	ihdr.push_back(0); // filter
	ihdr.push_back(0); // interlace
	write_chunk(f, "IHDR", ihdr);

	// raw scanlines with filter byte 0
	std::vector<uint8_t> raw;
	raw.reserve(static_cast<size_t>(height) * (static_cast<size_t>(width) * 3 + 1));
	for (int y = 0; y < height; ++y) {
		raw.push_back(0);
		const uint8_t* row = rgb.data() + static_cast<size_t>(y) * width * 3;
		raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
	}
	uLongf bound = compressBound(static_cast<uLong>(raw.size()));
	std::vector<uint8_t> compressed(bound);
	if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
		throw IoError("write_png: deflate failed for " + path);
	}
	compressed.resize(bound);
	write_chunk(f, "IDAT", compressed);
	write_chunk(f, "IEND", {});
	if (!f) throw IoError("write_png: short write to " + path);
}

void write_f32_blob(const std::string& path, const std::vector<float>& data) {
	std::ofstream f(path, std::ios::binary);
	if (!f) throw IoError("write_f32_blob: cannot open " + path);
	f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
	if (!f) throw IoError("write_f32_blob: short write to " + path);
}

void write_u8_blob(const std::string& path, const std::vector<uint8_t>& data) {
	std::ofstream f(path, std::ios::binary);
	if (!f) throw IoError("write_u8_blob: cannot open " + path);
	f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
	if (!f) throw IoError("write_u8_blob: short write to " + path);
}

std::vector<float> read_f32_blob(const std::string& path) {
	std::ifstream f(path, std::ios::binary | std::ios::ate);
	if (!f) throw IoError("read_f32_blob: cannot open " + path);
	const auto bytes = static_cast<size_t>(f.tellg());
	if (bytes % sizeof(float) != 0) throw IoError("read_f32_blob: size not a multiple of 4 in " + path);
	f.seekg(0);
	std::vector<float> data(bytes / sizeof(float));
	f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
	if (!f) throw IoError("read_f32_blob: short read from " + path);
	return data;
}

std::vector<uint8_t> read_u8_blob(const std::string& path) {
	std::ifstream f(path, std::ios::binary | std::ios::ate);
	if (!f) throw IoError("read_u8_blob: cannot open " + path);
	const auto bytes = static_cast<size_t>(f.tellg());
	f.seekg(0);
	std::vector<uint8_t> data(bytes);
	f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
	if (!f) throw IoError("read_u8_blob: short read from " + path);
	return data;
}

std::vector<uint8_t> to_u8(const std::vector<float>& rgb01) {
	std::vector<uint8_t> out(rgb01.size());
	for (size_t i = 0; i < rgb01.size(); ++i) {
		out[i] = static_cast<uint8_t>(std::lround(std::clamp(rgb01[i], 0.0f, 1.0f) * 255.0f));
	}
	return out;
}

} // namespace navmini
