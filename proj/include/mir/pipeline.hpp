#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "adam.hpp"
#include "dataset.hpp"
#include "layers.hpp"
#include "network.hpp"
#include "objective.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace mir {

/// Raised when the training objective stops being finite.
class DivergenceError : public std::runtime_error {
  public:
	using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Pre-processing

/// 3x3 mean filter (replicate padding) then 2x2 stride-2 max pooling.
inline Tensor preprocess(const Tensor& image) {
	if (image.rank() != 3 || image.dim(0) != 1)
		throw ShapeError("preprocess: expected [1,H,W], got " + shape_str(image.shape()));
	if (image.dim(1) < 2 || image.dim(2) < 2) throw ShapeError("preprocess: image must be at least 2x2");
	const long H = static_cast<long>(image.dim(1)), W = static_cast<long>(image.dim(2));
	Tensor smooth(image.shape());
	for (long y = 0; y < H; ++y)
		for (long x = 0; x < W; ++x) {
			double s = 0.0;
			for (long dy = -1; dy <= 1; ++dy)
				for (long dx = -1; dx <= 1; ++dx) s += detail::pixel(image, y + dy, x + dx);
			smooth[static_cast<std::size_t>(y * W + x)] = s / 9.0;
		}
	return maxpool_forward(smooth, 2, 2).output;
}

/// Raster-order valid patches; more than `limit` are subsampled uniformly without replacement.
inline std::vector<Tensor> extract_patches(const Tensor& image, std::size_t patch, std::size_t stride, std::size_t limit,
                                           std::uint64_t seed) {
	if (image.rank() != 3 || image.dim(0) != 1)
		throw ShapeError("extract_patches: expected [1,H,W], got " + shape_str(image.shape()));
	if (patch == 0 || stride == 0) throw std::invalid_argument("extract_patches: patch and stride must be positive");
	const std::size_t H = image.dim(1), W = image.dim(2);
	if (patch > H || patch > W) {
		std::clog << "warning: patch size " << patch << " exceeds image " << shape_str(image.shape())
		          << "; no patches extracted\n";
		return {};
	}
	const std::size_t ny = (H - patch) / stride + 1, nx = (W - patch) / stride + 1;
	std::vector<std::size_t> chosen(ny * nx);
	for (std::size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
	if (limit < chosen.size()) {
		Rng rng(seed);
		// partial Fisher-Yates, then restore raster order
		for (std::size_t i = 0; i < limit; ++i) std::swap(chosen[i], chosen[i + rng.index(chosen.size() - i)]);
		chosen.resize(limit);
		std::sort(chosen.begin(), chosen.end());
	}
	std::vector<Tensor> out;
	out.reserve(chosen.size());
	for (std::size_t id : chosen) {
		const std::size_t y0 = (id / nx) * stride, x0 = (id % nx) * stride;
		Tensor p({1, patch, patch});
		for (std::size_t y = 0; y < patch; ++y)
			for (std::size_t x = 0; x < patch; ++x) p[y * patch + x] = image[(y0 + y) * W + x0 + x];
		out.push_back(std::move(p));
	}
	return out;
}

// ---------------------------------------------------------------------------
// Synthetic texture data

/// One synthetic patch. Texture family = label % 3 (blobs, stripes, checker-noise);
/// the base brightness also rises with the label.
inline Tensor synth_patch(std::size_t label, std::size_t classes, std::size_t n, Rng& rng) {
	const double pi = std::numbers::pi;
	const double base = 0.25 + 0.5 * static_cast<double>(label) / static_cast<double>(classes - 1) + rng.uniform(-0.05, 0.05);
	Tensor img({1, n, n}, base);
	const double side = static_cast<double>(n);
	switch (label % 3) {
	case 0: { // smooth blobs
		const std::size_t blobs = 2 + rng.index(3);
		for (std::size_t b = 0; b < blobs; ++b) {
			const double cy = rng.uniform(0, side), cx = rng.uniform(0, side);
			const double sigma = rng.uniform(side / 10.0, side / 5.0);
			const double amp = rng.uniform(0.15, 0.3) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
			for (std::size_t y = 0; y < n; ++y)
				for (std::size_t x = 0; x < n; ++x) {
					const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
					img[y * n + x] += amp * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
				}
		}
		break;
	}
	case 1: { // oriented stripes
		const double theta = rng.uniform(0, pi), period = rng.uniform(4.0, 8.0), phase = rng.uniform(0, 2 * pi);
		const double amp = rng.uniform(0.15, 0.25);
		for (std::size_t y = 0; y < n; ++y)
			for (std::size_t x = 0; x < n; ++x) {
				const double u = static_cast<double>(x) * std::cos(theta) + static_cast<double>(y) * std::sin(theta);
				img[y * n + x] += amp * std::sin(2 * pi * u / period + phase);
			}
		break;
	}
	default: { // checkerboard plus speckle
		const std::size_t cell = 2 + rng.index(3);
		const std::size_t oy = rng.index(cell), ox = rng.index(cell);
		const double amp = rng.uniform(0.12, 0.2);
		for (std::size_t y = 0; y < n; ++y)
			for (std::size_t x = 0; x < n; ++x) {
				const bool on = (((y + oy) / cell) + ((x + ox) / cell)) % 2 == 0;
				img[y * n + x] += (on ? amp : -amp) + rng.uniform(-0.1, 0.1);
			}
		break;
	}
	}
	for (double& v : img.values()) v = std::clamp(v + 0.03 * rng.normal(), 0.0, 1.0);
	return img;
}

/// Balanced synthetic set: per_class samples of each class, interleaved by class.
inline Dataset synth_dataset(std::size_t classes, std::size_t per_class, std::size_t patch, std::uint64_t seed,
                             Split split = Split::train) {
	if (classes < 2) throw std::invalid_argument("synth_dataset: classes must be >= 2");
	if (patch < 5) throw std::invalid_argument("synth_dataset: patch must be >= 5");
	Dataset ds{{}, classes, Provenance::synthetic};
	Rng rng(seed);
	for (std::size_t i = 0; i < per_class; ++i)
		for (std::size_t c = 0; c < classes; ++c) ds.samples.push_back({synth_patch(c, classes, patch, rng), c, split});
	return ds;
}

/// Train and test sets drawn from independent streams of the same seed.
inline Dataset synth_train_test(std::size_t classes, std::size_t train_per_class, std::size_t test_per_class,
                                std::size_t patch, std::uint64_t seed) {
	Dataset ds = synth_dataset(classes, train_per_class, patch, derive_seed(seed, 0), Split::train);
	Dataset test = synth_dataset(classes, test_per_class, patch, derive_seed(seed, 1), Split::test);
	for (auto& s : test.samples) ds.samples.push_back(std::move(s));
	return ds;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
	ObjectiveMode objective = ObjectiveMode::classic;
	AdamConfig adam{};
	double lambda_s = 0.1;
	std::size_t epochs = 50;
	std::size_t batch = 16;
	std::uint64_t seed = 42;      ///< batch-order stream
	double converge_tol = 1e-8;   ///< stop once the max-norm of an update drops below this
	bool log_original_probs = true;
};

struct EpochLog {
	std::size_t epoch = 0; ///< 1-based
	LossReport loss;       ///< batch-size-weighted means of the component terms
	double accuracy = 0.0; ///< training accuracy (%) over the epoch's batches
};

struct TrainResult {
	Network net;
	std::vector<EpochLog> epochs;
	std::vector<LossReport> batches;
	AdamState optimizer;
	bool converged = false;
};

/// Trains on the samples tagged Split::train. Deterministic for a fixed config.
inline TrainResult train(Network net, const Dataset& data, const TrainConfig& cfg) {
	if (cfg.batch == 0) throw std::invalid_argument("train: batch size must be positive");
	std::vector<std::size_t> ids;
	for (std::size_t i = 0; i < data.samples.size(); ++i)
		if (data.samples[i].split == Split::train) ids.push_back(i);
	if (ids.empty()) throw std::invalid_argument("train: dataset has no training samples");
	if (data.classes != net.config.classes)
		throw std::invalid_argument("train: dataset has " + std::to_string(data.classes) + " classes, network " +
		                            std::to_string(net.config.classes));

	std::map<std::size_t, Tensor> inputs;
	for (std::size_t id : ids) inputs.emplace(id, network_input(net.config, data.samples[id].patch));

	TrainResult res{std::move(net), {}, {}, {}, false};
	Network& nw = res.net;
	res.optimizer = adam_init(nw.params, cfg.adam);
	PrevOutputBuffer prev;

	for (std::size_t epoch = 0; epoch < cfg.epochs && !res.converged; ++epoch) {
		Rng order_rng(derive_seed(cfg.seed, epoch));
		std::vector<std::size_t> order = ids;
		order_rng.shuffle(order);

		double sR = 0, sR1 = 0, sRL = 0, sS = 0, sOrig = 0;
		std::size_t seen = 0, correct = 0;
		for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
			const std::size_t stop = std::min(order.size(), start + cfg.batch);
			const std::size_t B = stop - start;
			std::vector<AutoencodeCache> ae(B);
			std::vector<ClassifyCache> cls(B);
			std::vector<std::vector<double>> orig(B);
			std::vector<SampleTerms> terms(B);
			for (std::size_t b = 0; b < B; ++b) {
				const std::size_t id = order[start + b];
				const Tensor& x = inputs.at(id);
				ae[b] = forward_autoencode(nw, x);
				cls[b] = forward_classify(nw, ae[b].reconstruction);
				if (cfg.log_original_probs) orig[b] = forward_classify(nw, x).probs;
				terms[b] = SampleTerms{&ae[b].reconstruction, &x, prev.find(id), &ae[b].code, cls[b].probs, orig[b],
				                       data.samples[id].label};
				correct += argmax(cls[b].probs) == data.samples[id].label;
			}
			BatchObjective obj = loss_backward(cfg.objective, terms, cfg.lambda_s);
			if (!std::isfinite(obj.report.objective()))
				throw DivergenceError("train: non-finite objective at epoch " + std::to_string(epoch + 1) + ", batch starting " +
				                      std::to_string(start) + " (R=" + std::to_string(obj.report.R) +
				                      ", RL=" + std::to_string(obj.report.RL) + ", S=" + std::to_string(obj.report.S) + ")");

			std::vector<Tensor> grads = zero_grads(nw);
			for (std::size_t b = 0; b < B; ++b) backward(nw, ae[b], cls[b], obj.grads[b], grads);
			const double delta = adam_step(res.optimizer, nw.params, grads);

			for (std::size_t b = 0; b < B; ++b) prev.store(order[start + b], std::move(ae[b].reconstruction));
			prev.advance();

			const double w = static_cast<double>(B);
			sR += w * obj.report.R;
			sR1 += w * obj.report.R1;
			sRL += w * obj.report.RL;
			sS += w * obj.report.S;
			sOrig += w * obj.report.original_true_prob;
			seen += B;
			res.batches.push_back(obj.report);
			if (adam_converged(res.optimizer, delta, cfg.converge_tol)) {
				res.converged = true;
				break;
			}
		}
		const double n = static_cast<double>(seen);
		EpochLog log{epoch + 1, compose_report(cfg.objective, sR / n, sR1 / n, sRL / n, sS / n, cfg.lambda_s),
		             100.0 * static_cast<double>(correct) / n};
		log.loss.original_true_prob = sOrig / n;
		res.epochs.push_back(log);
	}
	return res;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ConfidenceInterval {
	double center = 0.0;
	double halfwidth = 0.0;
	double sigma = 0.0;
};

/// center = mean, halfwidth = z * sigma / sqrt(n); sigma divides by n unless sample_sigma.
inline ConfidenceInterval confidence_interval(std::span<const double> samples, double z = 1.96, bool sample_sigma = false) {
	if (samples.empty()) throw std::invalid_argument("confidence_interval: no samples");
	const double n = static_cast<double>(samples.size());
	double mean = 0.0;
	for (double x : samples) mean += x;
	mean /= n;
	double ss = 0.0;
	for (double x : samples) ss += (x - mean) * (x - mean);
	double denom = n;
	if (sample_sigma) {
		if (samples.size() < 2) throw std::invalid_argument("confidence_interval: sample sigma needs n >= 2");
		denom = n - 1.0;
	}
	ConfidenceInterval ci;
	ci.center = mean;
	ci.sigma = std::sqrt(ss / denom);
	ci.halfwidth = z * ci.sigma / std::sqrt(n);
	return ci;
}

struct Metrics {
	double accuracy_pct = 0.0;
	double frames_per_second = 0.0;
	double reconstruction_time_s = 0.0;
	double classification_time_s = 0.0;
	double ci_center = 0.0;    ///< per-sample correctness (0/100) interval
	double ci_halfwidth = 0.0;
	std::size_t n_tests = 0;
	std::size_t correct = 0;
	std::vector<std::size_t> predictions;
};

/// Accuracy and throughput on the samples tagged `split`. Reconstruction time covers the
/// multispace transform and autoencoder; classification time the classifier head.
inline Metrics evaluate(const Network& net, const Dataset& data, Split split = Split::test, double z = 1.96) {
	using clock = std::chrono::steady_clock;
	Metrics m;
	std::vector<double> outcomes;
	for (const Sample& s : data.samples) {
		if (s.split != split) continue;
		const auto t0 = clock::now();
		const AutoencodeCache ae = forward_autoencode(net, network_input(net.config, s.patch));
		const auto t1 = clock::now();
		const ClassifyCache cls = forward_classify(net, ae.reconstruction);
		const auto t2 = clock::now();
		m.reconstruction_time_s += std::chrono::duration<double>(t1 - t0).count();
		m.classification_time_s += std::chrono::duration<double>(t2 - t1).count();
		const std::size_t pred = argmax(cls.probs);
		m.predictions.push_back(pred);
		m.correct += pred == s.label;
		outcomes.push_back(pred == s.label ? 100.0 : 0.0);
	}
	m.n_tests = outcomes.size();
	if (m.n_tests == 0) throw std::invalid_argument(std::string("evaluate: no ") + to_string(split) + " samples");
	m.accuracy_pct = 100.0 * static_cast<double>(m.correct) / static_cast<double>(m.n_tests);
	const double total = std::max(m.reconstruction_time_s + m.classification_time_s, 1e-9);
	m.frames_per_second = static_cast<double>(m.n_tests) / total;
	const ConfidenceInterval ci = confidence_interval(outcomes, z);
	m.ci_center = ci.center;
	m.ci_halfwidth = ci.halfwidth;
	return m;
}

// ---------------------------------------------------------------------------
// Benchmark sweep

struct BenchmarkRecord {
	std::size_t input_size = 0;
	std::size_t window = 0;
	PoolMode pool_mode = PoolMode::risa;
	double accuracy_pct = 0.0;
	double throughput_fps = 0.0;
	double ci_center = 0.0;
	double ci_halfwidth = 0.0;
	std::optional<double> improvement_pct; ///< this mode's accuracy minus risa's, same size and window
	double reconstruction_time_s = 0.0;
	double classification_time_s = 0.0;
	double total_time_s = 0.0;
	std::size_t frames = 0;
	std::vector<double> repeat_accuracy;
};

struct BenchmarkConfig {
	std::vector<std::size_t> sizes{32, 64};
	std::vector<std::size_t> windows{3, 4, 5};
	std::vector<PoolMode> modes{PoolMode::risa, PoolMode::mir};
	std::size_t repeats = 3;
	double z = 1.96;
	NetworkConfig net{};   ///< template; input_size, window, pool_mode and seed are set per cell
	TrainConfig train{};
	std::uint64_t seed = 42;
	std::size_t threads = 1;
};

/// Trains and evaluates every (size, window, mode) cell `repeats` times. `data_for_size`
/// supplies the dataset for each input size; cells may run on worker threads, and every
/// value column is independent of the thread count.
inline std::vector<BenchmarkRecord> benchmark_sweep(const BenchmarkConfig& cfg,
                                                    const std::function<Dataset(std::size_t)>& data_for_size) {
	if (cfg.repeats == 0) throw std::invalid_argument("benchmark_sweep: repeats must be >= 1");
	std::map<std::size_t, Dataset> data;
	for (std::size_t s : cfg.sizes)
		if (!data.count(s)) data.emplace(s, data_for_size(s));

	struct Cell {
		std::size_t size, window;
		PoolMode mode;
	};
	std::vector<Cell> cells;
	for (std::size_t s : cfg.sizes)
		for (std::size_t w : cfg.windows)
			for (PoolMode m : cfg.modes) cells.push_back({s, w, m});
	std::vector<BenchmarkRecord> records(cells.size());

	auto run_cell = [&](std::size_t ci) {
		const Cell& cell = cells[ci];
		const Dataset& ds = data.at(cell.size);
		BenchmarkRecord r;
		r.input_size = cell.size;
		r.window = cell.window;
		r.pool_mode = cell.mode;
		double rt = 0, ct = 0;
		for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
			NetworkConfig nc = cfg.net;
			nc.input_size = cell.size;
			nc.window = cell.window;
			nc.pool_mode = cell.mode;
			nc.classes = ds.classes;
			// seeds depend on (size, window, repeat) only, so risa and mir share initial draws where shapes agree
			nc.seed = derive_seed(cfg.seed, (cell.size * 16 + cell.window) * 1024 + rep);
			TrainConfig tc = cfg.train;
			tc.seed = derive_seed(nc.seed, 7);
			TrainResult tr = train(init_network(nc), ds, tc);
			const Metrics m = evaluate(tr.net, ds, Split::test, cfg.z);
			r.repeat_accuracy.push_back(m.accuracy_pct);
			rt += m.reconstruction_time_s;
			ct += m.classification_time_s;
			r.frames += m.n_tests;
		}
		const ConfidenceInterval ci_acc = confidence_interval(r.repeat_accuracy, cfg.z);
		r.accuracy_pct = ci_acc.center;
		r.ci_center = ci_acc.center;
		r.ci_halfwidth = ci_acc.halfwidth;
		r.reconstruction_time_s = rt;
		r.classification_time_s = ct;
		r.total_time_s = rt + ct;
		r.throughput_fps = static_cast<double>(r.frames) / std::max(r.total_time_s, 1e-9);
		records[ci] = std::move(r);
	};

	const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, cells.size()));
	if (workers == 1) {
		for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
	} else {
		std::atomic<std::size_t> next{0};
		std::exception_ptr failure;
		std::mutex failure_mu;
		std::vector<std::thread> pool;
		for (std::size_t w = 0; w < workers; ++w)
			pool.emplace_back([&] {
				for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
					try {
						run_cell(i);
					} catch (...) {
						std::lock_guard lock(failure_mu);
						if (!failure) failure = std::current_exception();
					}
				}
			});
		for (auto& t : pool) t.join();
		if (failure) std::rethrow_exception(failure);
	}

	for (BenchmarkRecord& r : records) {
		if (r.pool_mode == PoolMode::risa) {
			r.improvement_pct = 0.0;
			continue;
		}
		for (const BenchmarkRecord& base : records)
			if (base.pool_mode == PoolMode::risa && base.input_size == r.input_size && base.window == r.window)
				r.improvement_pct = r.accuracy_pct - base.accuracy_pct;
	}
	return records;
}

// ---------------------------------------------------------------------------
// CSV reports

namespace detail {

inline std::string num(double v) {
	char buf[40];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

inline std::string fixed(double v, int digits) {
	char buf[48];
	std::snprintf(buf, sizeof buf, "%.*f", digits, v);
	return buf;
}

} // namespace detail

inline const char* kTrainingLogHeader = "epoch,R,R1,RL,S,L,MR,EML,accuracy";

inline void write_training_log(std::ostream& out, const std::vector<EpochLog>& log) {
	out << kTrainingLogHeader << '\n';
	for (const EpochLog& e : log) {
		const LossReport& r = e.loss;
		out << e.epoch << ',' << detail::num(r.R) << ',' << detail::num(r.R1) << ',' << detail::num(r.RL) << ','
		    << detail::num(r.S) << ',' << detail::num(r.L) << ',' << detail::num(r.MR) << ',' << detail::num(r.EML) << ','
		    << detail::num(e.accuracy) << '\n';
	}
}

inline const char* kBenchmarkHeader =
    "input_size,window,pool_mode,accuracy_pct,throughput_fps,ci_center,ci_halfwidth,improvement_pct,"
    "reconstruction_time_s,classification_time_s,total_time_s,frames";

/// Columns that depend on wall-clock time.
inline const std::vector<std::string>& benchmark_timing_columns() {
	static const std::vector<std::string> cols = {"throughput_fps", "reconstruction_time_s", "classification_time_s",
	                                              "total_time_s"};
	return cols;
}

inline void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRecord>& records) {
	out << kBenchmarkHeader << '\n';
	for (const BenchmarkRecord& r : records) {
		out << r.input_size << ',' << r.window << ',' << to_string(r.pool_mode) << ',' << detail::fixed(r.accuracy_pct, 6)
		    << ',' << detail::fixed(r.throughput_fps, 3) << ',' << detail::fixed(r.ci_center, 6) << ','
		    << detail::fixed(r.ci_halfwidth, 6) << ','
		    << (r.improvement_pct ? detail::fixed(*r.improvement_pct, 6) : std::string()) << ','
		    << detail::num(r.reconstruction_time_s) << ',' << detail::num(r.classification_time_s) << ','
		    << detail::num(r.total_time_s) << ',' << r.frames << '\n';
	}
}

/// Parses what write_benchmark_csv produced ('#' lines are skipped).
inline std::vector<BenchmarkRecord> read_benchmark_csv(std::istream& in) {
	std::vector<BenchmarkRecord> out;
	std::string line;
	bool header = false;
	while (std::getline(in, line)) {
		if (line.empty() || line[0] == '#') continue;
		if (!header) {
			if (line != kBenchmarkHeader) throw std::runtime_error("benchmark csv: unexpected header '" + line + "'");
			header = true;
			continue;
		}
		std::vector<std::string> f;
		std::stringstream ss(line);
		std::string cell;
		while (std::getline(ss, cell, ',')) f.push_back(cell);
		if (!line.empty() && line.back() == ',') f.emplace_back();
		if (f.size() != 12) throw std::runtime_error("benchmark csv: expected 12 fields in '" + line + "'");
		BenchmarkRecord r;
		r.input_size = std::stoul(f[0]);
		r.window = std::stoul(f[1]);
		r.pool_mode = parse_pool_mode(f[2]);
		r.accuracy_pct = std::stod(f[3]);
		r.throughput_fps = std::stod(f[4]);
		r.ci_center = std::stod(f[5]);
		r.ci_halfwidth = std::stod(f[6]);
		if (!f[7].empty()) r.improvement_pct = std::stod(f[7]);
		r.reconstruction_time_s = std::stod(f[8]);
		r.classification_time_s = std::stod(f[9]);
		r.total_time_s = std::stod(f[10]);
		r.frames = std::stoul(f[11]);
		out.push_back(std::move(r));
	}
	if (!header) throw std::runtime_error("benchmark csv: missing header");
	return out;
}

} // namespace mir
