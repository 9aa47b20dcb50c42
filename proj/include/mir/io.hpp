#pragma once

// Image and artifact persistence: binary PGM (P5, maxval 255), checkpoint
// manifests with a little-endian float64 payload, and dataset manifests.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "network.hpp"
#include "tensor.hpp"

namespace mir {

class IoError : public std::runtime_error {
  public:
	enum class Kind {
		open_failed,
		bad_magic,
		malformed_header,
		unsupported_maxval,
		truncated,
		manifest_invalid,
		version_mismatch,
		payload_size,
	};

	IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
	Kind kind() const noexcept { return kind_; }

  private:
	Kind kind_;
};

// ---------------------------------------------------------------------------
// PGM

namespace detail {

// Next whitespace-delimited header token, skipping '#' comments.
inline std::string pgm_token(std::istream& in, const std::string& path) {
	std::string tok;
	int ch;
	while ((ch = in.get()) != EOF) {
		if (ch == '#') {
			while ((ch = in.get()) != EOF && ch != '\n') {}
			continue;
		}
		if (std::isspace(ch)) {
			if (!tok.empty()) return tok;
			continue;
		}
		tok.push_back(static_cast<char>(ch));
	}
	if (tok.empty()) throw IoError(IoError::Kind::malformed_header, path + ": unexpected end of PGM header");
	return tok;
}

inline std::size_t pgm_number(std::istream& in, const std::string& path, const char* field) {
	const std::string tok = pgm_token(in, path);
	if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
		throw IoError(IoError::Kind::malformed_header, path + ": PGM " + field + " is not a number: '" + tok + "'");
	return static_cast<std::size_t>(std::stoull(tok));
}

} // namespace detail

/// Reads a binary P5 image into [1,H,W] with values v/255.
inline Tensor read_pgm(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw IoError(IoError::Kind::open_failed, path.string() + ": cannot open for reading");
	const std::string p = path.string();
	char magic[2] = {0, 0};
	in.read(magic, 2);
	if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5')
		throw IoError(IoError::Kind::bad_magic, p + ": not a binary PGM (expected magic P5)");
	// the header token reader consumes the single whitespace byte after maxval
	const std::size_t W = detail::pgm_number(in, p, "width");
	const std::size_t H = detail::pgm_number(in, p, "height");
	const std::size_t maxval = detail::pgm_number(in, p, "maxval");
	if (W == 0 || H == 0) throw IoError(IoError::Kind::malformed_header, p + ": PGM has zero extent");
	if (maxval != 255)
		throw IoError(IoError::Kind::unsupported_maxval, p + ": PGM maxval " + std::to_string(maxval) + " unsupported (need 255)");
	std::vector<unsigned char> buf(W * H);
	in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
	if (static_cast<std::size_t>(in.gcount()) != buf.size())
		throw IoError(IoError::Kind::truncated, p + ": PGM payload truncated (" + std::to_string(in.gcount()) + " of " +
		                                            std::to_string(buf.size()) + " bytes)");
	Tensor t({1, H, W});
	for (std::size_t i = 0; i < buf.size(); ++i) t[i] = static_cast<double>(buf[i]) / 255.0;
	return t;
}

inline unsigned char quantize_byte(double v) {
	const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
	return static_cast<unsigned char>(q);
}

/// Writes a [1,H,W] (or [H,W]) tensor as P5; values are round(v*255) clamped to [0,255].
/// Each line of `comment` becomes a '#' header comment.
inline void write_pgm(const Tensor& image, const std::filesystem::path& path, const std::string& comment = {}) {
	std::size_t H, W;
	if (image.rank() == 3 && image.dim(0) == 1) {
		H = image.dim(1);
		W = image.dim(2);
	} else if (image.rank() == 2) {
		H = image.dim(0);
		W = image.dim(1);
	} else {
		throw ShapeError("write_pgm: expected a single-channel image, got " + shape_str(image.shape()));
	}
	std::ofstream out(path, std::ios::binary);
	if (!out) throw IoError(IoError::Kind::open_failed, path.string() + ": cannot open for writing");
	out << "P5\n";
	std::istringstream lines(comment);
	for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
	out << W << ' ' << H << "\n255\n";
	std::vector<unsigned char> buf(image.size());
	for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize_byte(image[i]);
	out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
	if (!out) throw IoError(IoError::Kind::open_failed, path.string() + ": write failed");
}

/// Luma conversion of a [3,H,W] RGB tensor.
inline Tensor rgb_to_gray(const Tensor& rgb) {
	if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("rgb_to_gray: expected [3,H,W], got " + shape_str(rgb.shape()));
	const std::size_t HW = rgb.dim(1) * rgb.dim(2);
	Tensor g({1, rgb.dim(1), rgb.dim(2)});
	for (std::size_t i = 0; i < HW; ++i) g[i] = 0.299 * rgb[i] + 0.587 * rgb[HW + i] + 0.114 * rgb[2 * HW + i];
	return g;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const NetworkConfig& c) {
	return {
	    {"input_size", c.input_size},
	    {"window", c.window},
	    {"filters", c.filters},
	    {"pool_mode", to_string(c.pool_mode)},
	    {"pool_window", c.pool_window},
	    {"pool_stride", c.pool_stride},
	    {"group_size", c.group_size},
	    {"classifier_hidden", c.classifier_hidden},
	    {"classes", c.classes},
	    {"seed", c.seed},
	    {"glcm", {{"window", c.glcm.window}, {"levels", c.glcm.levels}, {"dy", c.glcm.dy}, {"dx", c.glcm.dx}}},
	};
}

inline NetworkConfig config_from_json(const nlohmann::json& j) {
	NetworkConfig c;
	c.input_size = j.at("input_size").get<std::size_t>();
	c.window = j.at("window").get<std::size_t>();
	c.filters = j.at("filters").get<std::size_t>();
	c.pool_mode = parse_pool_mode(j.at("pool_mode").get<std::string>());
	c.pool_window = j.at("pool_window").get<std::size_t>();
	c.pool_stride = j.at("pool_stride").get<std::size_t>();
	c.group_size = j.at("group_size").get<std::size_t>();
	c.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
	c.classes = j.at("classes").get<std::size_t>();
	c.seed = j.at("seed").get<std::uint64_t>();
	const auto& g = j.at("glcm");
	c.glcm.window = g.at("window").get<std::size_t>();
	c.glcm.levels = g.at("levels").get<std::size_t>();
	c.glcm.dy = g.at("dy").get<int>();
	c.glcm.dx = g.at("dx").get<int>();
	return c;
}

inline std::filesystem::path checkpoint_payload_path(const std::filesystem::path& manifest) {
	return std::filesystem::path(manifest.string() + ".bin");
}

namespace detail {

inline void put_le(std::string& out, double v) {
	const auto bits = std::bit_cast<std::uint64_t>(v);
	for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

inline double get_le(const unsigned char* p) {
	std::uint64_t bits = 0;
	for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
	return std::bit_cast<double>(bits);
}

} // namespace detail

inline nlohmann::json checkpoint_manifest(const Network& net, const std::string& payload_name) {
	nlohmann::json params = nlohmann::json::array();
	for (std::size_t i = 0; i < net.params.size(); ++i)
		params.push_back({{"name", param_names()[i]}, {"shape", net.params[i].shape()}, {"count", net.params[i].size()}});
	return {
	    {"format", "mir-checkpoint"},
	    {"version", kCheckpointVersion},
	    {"seed", net.config.seed},
	    {"config", config_to_json(net.config)},
	    {"parameter_count", net.parameter_count()},
	    {"payload", payload_name},
	    {"payload_bytes", net.parameter_count() * 8},
	    {"byte_order", "little"},
	    {"parameters", params},
	};
}

/// Writes `path` (JSON manifest) and `path`.bin (payload). A non-null `run` is stored
/// verbatim under "run" and ignored on load.
inline void save_checkpoint(const Network& net, const std::filesystem::path& path, const nlohmann::json& run = nullptr) {
	const auto payload_path = checkpoint_payload_path(path);
	std::string bytes;
	bytes.reserve(net.parameter_count() * 8);
	for (const Tensor& t : net.params)
		for (double v : t.values()) detail::put_le(bytes, v);
	{
		std::ofstream bin(payload_path, std::ios::binary);
		if (!bin) throw IoError(IoError::Kind::open_failed, payload_path.string() + ": cannot open for writing");
		bin.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
		if (!bin) throw IoError(IoError::Kind::open_failed, payload_path.string() + ": write failed");
	}
	std::ofstream man(path);
	if (!man) throw IoError(IoError::Kind::open_failed, path.string() + ": cannot open for writing");
	nlohmann::json j = checkpoint_manifest(net, payload_path.filename().string());
	if (!run.is_null()) j["run"] = run;
	man << j.dump(2) << '\n';
}

inline Network load_checkpoint(const std::filesystem::path& path) {
	std::ifstream man(path);
	if (!man) throw IoError(IoError::Kind::open_failed, path.string() + ": cannot open checkpoint manifest");
	nlohmann::json j;
	try {
		man >> j;
	} catch (const nlohmann::json::exception& e) {
		throw IoError(IoError::Kind::manifest_invalid, path.string() + ": manifest is not valid JSON (" + e.what() + ")");
	}
	Network net;
	std::filesystem::path payload_path;
	try {
		if (j.at("format").get<std::string>() != "mir-checkpoint")
			throw IoError(IoError::Kind::manifest_invalid, path.string() + ": not a checkpoint manifest");
		const int version = j.at("version").get<int>();
		if (version != kCheckpointVersion)
			throw IoError(IoError::Kind::version_mismatch, path.string() + ": checkpoint version " + std::to_string(version) +
			                                                   ", this build reads version " + std::to_string(kCheckpointVersion));
		net.config = config_from_json(j.at("config"));
		const auto shapes = param_shapes(net.config);
		const auto& listed = j.at("parameters");
		if (listed.size() != shapes.size())
			throw IoError(IoError::Kind::manifest_invalid, path.string() + ": manifest lists " + std::to_string(listed.size()) +
			                                                   " parameters, config implies " + std::to_string(shapes.size()));
		for (std::size_t i = 0; i < shapes.size(); ++i) {
			if (listed[i].at("name").get<std::string>() != param_names()[i] ||
			    listed[i].at("shape").get<Shape>() != shapes[i] || listed[i].at("count").get<std::size_t>() != shape_numel(shapes[i]))
				throw IoError(IoError::Kind::manifest_invalid,
				              path.string() + ": parameter " + std::to_string(i) + " does not match the configured shape " +
				                  shape_str(shapes[i]));
			net.params.emplace_back(shapes[i]);
		}
		payload_path = path.parent_path() / j.at("payload").get<std::string>();
	} catch (const nlohmann::json::exception& e) {
		throw IoError(IoError::Kind::manifest_invalid, path.string() + ": incomplete manifest (" + e.what() + ")");
	} catch (const std::invalid_argument& e) {
		throw IoError(IoError::Kind::manifest_invalid, path.string() + ": " + e.what());
	}

	std::ifstream bin(payload_path, std::ios::binary);
	if (!bin) throw IoError(IoError::Kind::open_failed, payload_path.string() + ": cannot open checkpoint payload");
	const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
	const std::size_t expected = net.parameter_count() * 8;
	if (bytes.size() != expected)
		throw IoError(IoError::Kind::payload_size, payload_path.string() + ": payload has " + std::to_string(bytes.size()) +
		                                               " bytes, manifest requires " + std::to_string(expected));
	const unsigned char* p = bytes.data();
	for (Tensor& t : net.params)
		for (double& v : t.values()) {
			v = detail::get_le(p);
			p += 8;
		}
	return net;
}

// ---------------------------------------------------------------------------
// Dataset manifests: CSV "path,label,split", paths relative to the manifest.

/// `comment` lines are written as leading '#' lines of the manifest.
inline void write_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::string& comment = {}) {
	std::filesystem::create_directories(dir);
	std::ofstream man(dir / "manifest.csv");
	if (!man) throw IoError(IoError::Kind::open_failed, (dir / "manifest.csv").string() + ": cannot open for writing");
	std::istringstream lines(comment);
	for (std::string line; std::getline(lines, line);) man << "# " << line << '\n';
	man << "path,label,split\n";
	std::size_t idx[2] = {0, 0};
	for (const Sample& s : ds.samples) {
		char name[64];
		std::snprintf(name, sizeof name, "%s_%05zu.pgm", to_string(s.split), idx[s.split == Split::test]++);
		write_pgm(s.patch, dir / name);
		man << name << ',' << s.label << ',' << to_string(s.split) << '\n';
	}
}

inline Dataset read_dataset_manifest(const std::filesystem::path& manifest, std::size_t classes = 0) {
	std::ifstream in(manifest);
	if (!in) throw IoError(IoError::Kind::open_failed, manifest.string() + ": cannot open dataset manifest");
	Dataset ds{{}, 0, Provenance::files};
	std::string line;
	std::size_t lineno = 0, max_label = 0;
	while (std::getline(in, line)) {
		++lineno;
		if (!line.empty() && line.back() == '\r') line.pop_back();
		if (line.empty() || line[0] == '#') continue;
		if (line.rfind("path,", 0) == 0) continue;
		std::stringstream ss(line);
		std::string path, label, split;
		if (!std::getline(ss, path, ',') || !std::getline(ss, label, ','))
			throw IoError(IoError::Kind::manifest_invalid, manifest.string() + ":" + std::to_string(lineno) + ": expected path,label[,split]");
		std::getline(ss, split, ',');
		Sample s;
		try {
			s.label = std::stoul(label);
			s.split = split.empty() ? Split::train : parse_split(split);
		} catch (const std::exception&) {
			throw IoError(IoError::Kind::manifest_invalid, manifest.string() + ":" + std::to_string(lineno) + ": bad label or split");
		}
		s.patch = read_pgm(manifest.parent_path() / path);
		max_label = std::max(max_label, s.label);
		ds.samples.push_back(std::move(s));
	}
	ds.classes = classes ? classes : std::max<std::size_t>(2, max_label + 1);
	return ds;
}

} // namespace mir
