#pragma once

// Command-line front end. run_cli() is the whole program; tools/mir_cli.cpp only forwards argv.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcheck.hpp"
#include "io.hpp"
#include "multispace.hpp"
#include "network.hpp"
#include "pipeline.hpp"

namespace mir {

namespace cli {

struct DataFlags {
	std::string in;
	std::size_t classes = 3;
	std::size_t train_per_class = 100;
	std::size_t test_per_class = 50;
	std::size_t patch = 32;
};

struct NetFlags {
	std::string pool = "max";
	std::size_t window = 3;
	std::size_t filters = 8;
	std::size_t hidden = 256;
	std::size_t group_size = 2;
	GlcmParams glcm{};
};

struct TrainFlags {
	std::string loss = "classic";
	double lambda_s = 0.1;
	AdamConfig adam{};
	std::size_t epochs = 50;
	std::size_t batch = 16;
	double tol = 1e-8;
};

inline void add_synthetic_flags(CLI::App* app, DataFlags& d, bool with_patch = true) {
	app->add_option("--classes", d.classes, "number of classes")->check(CLI::Range(std::size_t{2}, std::size_t{1000}));
	app->add_option("--train-per-class", d.train_per_class, "synthetic training samples per class");
	app->add_option("--test-per-class", d.test_per_class, "synthetic test samples per class");
	if (with_patch)
		app->add_option("--patch", d.patch, "patch side length (network input size)")->check(CLI::PositiveNumber);
}

inline void add_glcm_flags(CLI::App* app, GlcmParams& g) {
	app->add_option("--glcm-window", g.window, "GLCM window side (odd)");
	app->add_option("--glcm-levels", g.levels, "GLCM gray levels");
	app->add_option("--glcm-dy", g.dy, "GLCM row offset");
	app->add_option("--glcm-dx", g.dx, "GLCM column offset");
}

inline void add_net_flags(CLI::App* app, NetFlags& n, bool with_pool_window = true) {
	if (with_pool_window) {
		app->add_option("--pool", n.pool, "pooling mode")->check(CLI::IsMember({"max", "risa", "mir"}));
		app->add_option("--window", n.window, "encoder filter side")->check(CLI::IsMember({3, 4, 5}));
	}
	app->add_option("--filters", n.filters, "encoder filter count")->check(CLI::PositiveNumber);
	app->add_option("--hidden", n.hidden, "classifier hidden units")->check(CLI::PositiveNumber);
	app->add_option("--group-size", n.group_size, "subspace size for risa pooling")->check(CLI::PositiveNumber);
	add_glcm_flags(app, n.glcm);
}

inline void add_train_flags(CLI::App* app, TrainFlags& t) {
	app->add_option("--loss", t.loss, "objective")->check(CLI::IsMember({"classic", "enhanced"}));
	app->add_option("--lambda-s", t.lambda_s, "sparsity weight")->check(CLI::NonNegativeNumber);
	app->add_option("--alpha", t.adam.alpha, "Adam step size");
	app->add_option("--phi1", t.adam.phi1, "Adam first-moment decay");
	app->add_option("--phi2", t.adam.phi2, "Adam second-moment decay");
	app->add_option("--eps", t.adam.epsilon, "Adam epsilon");
	app->add_option("--epochs", t.epochs, "training epochs");
	app->add_option("--batch", t.batch, "batch size")->check(CLI::PositiveNumber);
	app->add_option("--tol", t.tol, "stop when the max-norm of an update falls below this");
}

inline NetworkConfig network_config(const NetFlags& n, std::size_t input_size, std::size_t classes, std::uint64_t seed) {
	NetworkConfig c;
	c.input_size = input_size;
	c.window = n.window;
	c.filters = n.filters;
	c.pool_mode = parse_pool_mode(n.pool);
	c.group_size = n.group_size;
	c.classifier_hidden = n.hidden;
	c.classes = classes;
	c.seed = seed;
	c.glcm = n.glcm;
	validate(c);
	return c;
}

inline TrainConfig train_config(const TrainFlags& t, std::uint64_t seed) {
	TrainConfig c;
	c.objective = parse_objective_mode(t.loss);
	c.adam = t.adam;
	validate(c.adam);
	c.lambda_s = t.lambda_s;
	c.epochs = t.epochs;
	c.batch = t.batch;
	c.seed = seed;
	c.converge_tol = t.tol;
	return c;
}

/// Manifest data if --in was given, otherwise the seeded synthetic train/test set.
inline Dataset load_data(const DataFlags& d, std::uint64_t seed) {
	if (!d.in.empty()) {
		Dataset ds = read_dataset_manifest(d.in, d.classes);
		ds.validate();
		if (ds.samples.empty()) throw std::invalid_argument("--in " + d.in + ": manifest lists no samples");
		return ds;
	}
	return synth_train_test(d.classes, d.train_per_class, d.test_per_class, d.patch, seed);
}

/// The parsed flags of `app` as "key=value" lines, defaults included.
inline std::string config_text(const CLI::App* app) {
	std::string s = std::string("command=") + app->get_name() + "\n" + app->config_to_str(true, false);
	while (!s.empty() && s.back() == '\n') s.pop_back();
	return s;
}

inline void write_comment(std::ostream& out, const std::string& text) {
	std::istringstream lines(text);
	for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
}

inline std::ofstream open_out(const std::string& path) {
	std::ofstream f(path);
	if (!f) throw IoError(IoError::Kind::open_failed, path + ": cannot open for writing");
	return f;
}

inline std::string fmt(double v) { return detail::num(v); }

inline const char* kMetricsHeader =
    "n_tests,correct,accuracy_pct,ci_center,ci_halfwidth,throughput_fps,reconstruction_time_s,classification_time_s";

inline void write_metrics_csv(std::ostream& out, const Metrics& m) {
	out << kMetricsHeader << '\n'
	    << m.n_tests << ',' << m.correct << ',' << fmt(m.accuracy_pct) << ',' << fmt(m.ci_center) << ','
	    << fmt(m.ci_halfwidth) << ',' << fmt(m.frames_per_second) << ',' << fmt(m.reconstruction_time_s) << ','
	    << fmt(m.classification_time_s) << '\n';
}

} // namespace cli

/// Runs one CLI invocation; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
	using namespace cli;
	CLI::App app{"Multispace image reconstruction autoencoder: data synthesis, training, evaluation and benchmarks",
	             "mir_cli"};
	app.option_defaults()->always_capture_default();
	app.require_subcommand(1);
	app.set_config("--config", "", "INI/TOML file that pre-populates flags");

	std::uint64_t seed = 42;
	DataFlags data;
	NetFlags netf;
	TrainFlags trainf;
	std::string in, out_path, model, log_path, split = "test";
	double z = 1.96;

	// synth
	CLI::App* synth = app.add_subcommand("synth", "write a synthetic PGM dataset with manifest.csv");
	add_synthetic_flags(synth, data);
	synth->add_option("--seed", seed, "random seed");
	synth->add_option("--out", out_path, "output directory")->required();

	// preprocess
	std::size_t patch = 0, stride = 0, limit = 10000;
	CLI::App* pre = app.add_subcommand("preprocess", "3x3 mean filter + 2x2 max pool; optionally cut patches");
	pre->add_option("--in", in, "input PGM")->required()->check(CLI::ExistingFile);
	pre->add_option("--out", out_path, "output PGM, or output directory when --patch is set")->required();
	pre->add_option("--patch", patch, "patch side; 0 writes the whole preprocessed image");
	pre->add_option("--stride", stride, "patch stride; 0 means equal to --patch");
	pre->add_option("--limit", limit, "maximum number of patches (seeded uniform subsample)");
	pre->add_option("--seed", seed, "random seed for patch subsampling");

	// reconstruct
	GlcmParams glcm;
	CLI::App* rec = app.add_subcommand("reconstruct", "write the gradient, GLCM and LBP channels as PGM files");
	rec->add_option("--in", in, "input PGM")->required()->check(CLI::ExistingFile);
	rec->add_option("--out", out_path, "output directory")->required();
	add_glcm_flags(rec, glcm);

	// train
	CLI::App* tr = app.add_subcommand("train", "train a network and save a checkpoint");
	tr->add_option("--in", data.in, "dataset manifest.csv; synthetic data when omitted")->check(CLI::ExistingFile);
	add_synthetic_flags(tr, data);
	add_net_flags(tr, netf);
	add_train_flags(tr, trainf);
	tr->add_option("--seed", seed, "seed for data, initialization and batch order");
	tr->add_option("--out", out_path, "checkpoint path (payload written to <out>.bin)")->required();
	tr->add_option("--log", log_path, "training log CSV; defaults to <out>.log.csv");

	// eval
	CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
	ev->add_option("--model", model, "checkpoint manifest")->required()->check(CLI::ExistingFile);
	ev->add_option("--in", data.in, "dataset manifest.csv; synthetic data when omitted")->check(CLI::ExistingFile);
	add_synthetic_flags(ev, data, false);
	ev->add_option("--seed", seed, "synthetic data seed");
	ev->add_option("--split", split, "split to evaluate")->check(CLI::IsMember({"train", "test"}));
	ev->add_option("--z", z, "confidence critical value");
	ev->add_option("--out", out_path, "metrics CSV; printed only when omitted");

	// benchmark
	BenchmarkConfig bc;
	std::vector<std::string> modes{"risa", "mir"};
	CLI::App* bm = app.add_subcommand("benchmark", "sweep sizes x windows x pool modes on synthetic data");
	bm->add_option("--sizes", bc.sizes, "input sizes")->delimiter(',')->check(CLI::PositiveNumber);
	bm->add_option("--windows", bc.windows, "encoder filter sides")->delimiter(',')->check(CLI::IsMember({3, 4, 5}));
	bm->add_option("--modes", modes, "pool modes")->delimiter(',')->check(CLI::IsMember({"max", "risa", "mir"}));
	bm->add_option("--repeats", bc.repeats, "runs per cell")->check(CLI::PositiveNumber);
	bm->add_option("--z", bc.z, "confidence critical value");
	bm->add_option("--threads", bc.threads, "worker threads (values do not depend on this)")->check(CLI::PositiveNumber);
	add_synthetic_flags(bm, data, false);
	add_net_flags(bm, netf, false);
	add_train_flags(bm, trainf);
	bm->add_option("--seed", seed, "master seed");
	bm->add_option("--out", out_path, "benchmark CSV; standard output when omitted");

	// gradcheck
	GradCheckOptions gco;
	CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks for all layers and the full graph");
	gc->add_option("--seed", seed, "random seed");
	gc->add_option("--shapes", gco.shapes, "random shapes per layer")->check(CLI::PositiveNumber);
	gc->add_option("--step", gco.step, "central-difference step")->check(CLI::PositiveNumber);
	gc->add_option("--tol", gco.rel_tol, "relative error tolerance")->check(CLI::PositiveNumber);
	gc->add_option("--out", out_path, "per-suite CSV");

	std::vector<std::string> rev(args.rbegin(), args.rend());
	try {
		app.parse(rev);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e, out, err);
		return code == 0 ? 0 : 2;
	}

	CLI::App* cmd = app.get_subcommands().front();
	const std::string cfg = config_text(cmd);
	try {
		if (cmd == synth) {
			const Dataset ds = synth_train_test(data.classes, data.train_per_class, data.test_per_class, data.patch, seed);
			write_dataset(ds, out_path, cfg);
			out << "wrote " << ds.samples.size() << " samples to " << out_path << '\n';
		} else if (cmd == pre) {
			const Tensor img = preprocess(read_pgm(in));
			if (patch == 0) {
				write_pgm(img, out_path, cfg);
				out << "wrote " << shape_str(img.shape()) << " to " << out_path << '\n';
			} else {
				const auto patches = extract_patches(img, patch, stride ? stride : patch, limit, seed);
				std::filesystem::create_directories(out_path);
				for (std::size_t i = 0; i < patches.size(); ++i) {
					char name[32];
					std::snprintf(name, sizeof name, "patch_%05zu.pgm", i);
					write_pgm(patches[i], std::filesystem::path(out_path) / name, cfg);
				}
				out << "wrote " << patches.size() << " patches to " << out_path << '\n';
			}
		} else if (cmd == rec) {
			const MultispaceImage m = multispace_reconstruct(read_pgm(in), glcm);
			std::filesystem::create_directories(out_path);
			const std::filesystem::path dir(out_path);
			write_pgm(m.gradient, dir / "gradient.pgm", cfg);
			write_pgm(m.glcm, dir / "glcm.pgm", cfg);
			write_pgm(m.lbp, dir / "lbp.pgm", cfg);
			out << "wrote gradient.pgm, glcm.pgm, lbp.pgm to " << out_path << '\n';
		} else if (cmd == tr) {
			const Dataset ds = load_data(data, seed);
			const NetworkConfig nc = network_config(netf, ds.patch_side(), ds.classes, seed);
			const TrainConfig tc = train_config(trainf, seed);
			TrainResult res = train(init_network(nc), ds, tc);
			nlohmann::json run = nlohmann::json::object();
			std::istringstream lines(cfg);
			for (std::string line; std::getline(lines, line);) {
				const auto eq = line.find('=');
				if (eq != std::string::npos) run[line.substr(0, eq)] = line.substr(eq + 1);
			}
			save_checkpoint(res.net, out_path, run);
			std::ofstream log = open_out(log_path.empty() ? out_path + ".log.csv" : log_path);
			write_comment(log, cfg);
			write_training_log(log, res.epochs);
			out << "epochs: " << res.epochs.size() << (res.converged ? " (converged)" : "") << '\n';
			if (!res.epochs.empty()) out << "train_accuracy: " << fmt(res.epochs.back().accuracy) << '\n';
			if (ds.count(Split::test) > 0) out << "test_accuracy: " << fmt(evaluate(res.net, ds).accuracy_pct) << '\n';
		} else if (cmd == ev) {
			const Network net = load_checkpoint(model);
			DataFlags d = data;
			d.patch = net.config.input_size;
			if (!ev->count("--classes")) d.classes = net.config.classes;
			const Dataset ds = load_data(d, seed);
			if (ds.patch_side() != net.config.input_size)
				throw ShapeError("--in " + d.in + ": patch side " + std::to_string(ds.patch_side()) + " does not match model input " +
				                 std::to_string(net.config.input_size));
			const Metrics m = evaluate(net, ds, parse_split(split), z);
			if (!out_path.empty()) {
				std::ofstream f = open_out(out_path);
				write_comment(f, cfg);
				write_metrics_csv(f, m);
			}
			out << "accuracy_pct: " << fmt(m.accuracy_pct) << " (" << m.correct << "/" << m.n_tests << ")\n"
			    << "ci: " << fmt(m.ci_center) << " +/- " << fmt(m.ci_halfwidth) << '\n'
			    << "throughput_fps: " << fmt(m.frames_per_second) << '\n';
		} else if (cmd == bm) {
			bc.modes.clear();
			for (const auto& m : modes) bc.modes.push_back(parse_pool_mode(m));
			bc.seed = seed;
			bc.net = network_config(netf, bc.sizes.front(), data.classes, seed);
			bc.train = train_config(trainf, seed);
			const auto records = benchmark_sweep(bc, [&](std::size_t size) {
				return synth_train_test(data.classes, data.train_per_class, data.test_per_class, size, derive_seed(seed, size));
			});
			if (out_path.empty()) {
				write_comment(out, cfg);
				write_benchmark_csv(out, records);
			} else {
				std::ofstream f = open_out(out_path);
				write_comment(f, cfg);
				write_benchmark_csv(f, records);
				out << "wrote " << records.size() << " records to " << out_path << '\n';
			}
		} else if (cmd == gc) {
			const auto stats = gradcheck_all(seed, gco);
			double worst = 0.0;
			bool ok = true;
			std::ostringstream csv;
			csv << "suite,checked,passed,excluded,pass_fraction,max_rel_error\n";
			for (const auto& s : stats) {
				worst = std::max(worst, s.max_rel_error);
				ok = ok && s.ok(gco.min_pass_fraction);
				char line[160];
				std::snprintf(line, sizeof line, "%-28s %7zu/%-7zu excluded %-4zu max_rel %.3e %s\n", s.name.c_str(), s.passed,
				              s.checked, s.excluded, s.max_rel_error, s.ok(gco.min_pass_fraction) ? "ok" : "FAIL");
				out << line;
				csv << s.name << ',' << s.checked << ',' << s.passed << ',' << s.excluded << ',' << fmt(s.pass_fraction()) << ','
				    << fmt(s.max_rel_error) << '\n';
			}
			out << "max relative error: " << fmt(worst) << '\n';
			if (!out_path.empty()) {
				std::ofstream f = open_out(out_path);
				write_comment(f, cfg);
				f << csv.str();
			}
			if (!ok) {
				err << "mir_cli gradcheck: error: some suites fell below the required pass fraction\n";
				return 1;
			}
		}
	} catch (const std::exception& e) {
		err << "mir_cli " << cmd->get_name() << ": error: " << e.what() << '\n';
		return 1;
	}
	return 0;
}

} // namespace mir
