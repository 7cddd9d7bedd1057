#include "ucolor/app.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "ucolor/config.hpp"
#include "ucolor/error.hpp"
#include "ucolor/io.hpp"
#include "ucolor/kernels.hpp"
#include "ucolor/metrics.hpp"
#include "ucolor/net.hpp"
#include "ucolor/training.hpp"
#include "ucolor/waterphysics.hpp"

namespace ucolor::app {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool quiet = false;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

struct Model {
  net::ModelConfig config;
  net::ModelWeights weights;
};

Model load_model(const std::string& weights_path, const std::string& config_path) {
  io::LoadedWeights lw = io::load_weights(weights_path);
  Model m{lw.config, std::move(lw.weights)};
  if (!config_path.empty()) m.config = config::load(config_path).model;
  net::check_compatible(m.config, m.weights);
  return m;
}

Image enhance_any_size(const Image& img, const Model& m) {
  const Image padded = pad_to_multiple(img, 4);
  const Image out = net::enhance(padded, m.config, m.weights);
  return out.crop(0, 0, img.height, img.width);
}

physics::BackgroundLight parse_background(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw DomainError("--background: '" + tok + "' is not a number");
    }
  }
  if (v.size() != 3) throw DomainError("--background expects r,g,b");
  for (double c : v) {
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("--background components must lie in [0,1]");
  }
  return {v[0], v[1], v[2]};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Underwater image enhancement: multi-color-space network, physics priors, metrics", "ucolor"};
  cli.require_subcommand(1);
  cli.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = cli.add_option("--seed", seed_value, "Seed for weight init and sampling");
  cli.add_option("--threads", g.threads, "Worker threads (default: UCOLOR_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  cli.add_flag("--quiet", g.quiet, "Only print errors");

  // enhance
  auto* enhance = cli.add_subcommand("enhance", "Run the network on an image or a directory of images");
  std::string en_input, en_input_dir, en_weights, en_config, en_out;
  auto* en_in_opt = enhance->add_option("--input", en_input, "Input image (.ppm/.png)");
  auto* en_dir_opt = enhance->add_option("--input-dir", en_input_dir, "Directory of input images");
  en_in_opt->excludes(en_dir_opt);
  enhance->add_option("--weights", en_weights, "Weights file")->required();
  enhance->add_option("--config", en_config, "Run config whose model block must match the weights");
  enhance->add_option("--out", en_out, "Output image, or directory in --input-dir mode")->required();

  // transmission
  auto* trans = cli.add_subcommand("transmission", "Estimate the medium transmission map");
  std::string tr_input, tr_prior = "gdcp", tr_out;
  std::size_t tr_patch = physics::kDefaultPatch;
  bool tr_reverse = false;
  trans->add_option("--input", tr_input, "Input image")->required();
  trans->add_option("--prior", tr_prior, "gdcp, dcp or udcp")->check(CLI::IsMember({"gdcp", "dcp", "udcp"}));
  trans->add_option("--patch", tr_patch, "Odd window size");
  trans->add_option("--out", tr_out, "Output grayscale map (.pgm/.png)")->required();
  trans->add_flag("--reverse", tr_reverse, "Write 1 - T instead of T");

  // restore
  auto* restore = cli.add_subcommand("restore", "Classical prior-based restoration");
  std::string rs_input, rs_prior = "gdcp", rs_out;
  std::size_t rs_patch = physics::kDefaultPatch;
  double rs_floor = physics::kDefaultTFloor;
  restore->add_option("--input", rs_input, "Input image")->required();
  restore->add_option("--prior", rs_prior, "gdcp, dcp or udcp")->check(CLI::IsMember({"gdcp", "dcp", "udcp"}));
  restore->add_option("--patch", rs_patch, "Odd window size");
  restore->add_option("--t-floor", rs_floor, "Lower bound on T in the inversion")->check(CLI::Range(1e-6, 1.0));
  restore->add_option("--out", rs_out, "Output image")->required();

  // synthesize
  auto* synth = cli.add_subcommand("synthesize", "Degrade a clean image with the image formation model");
  std::string sy_clean, sy_trans, sy_bg, sy_out;
  double sy_t = -1.0;
  synth->add_option("--clean", sy_clean, "Clean image")->required();
  auto* sy_trans_opt = synth->add_option("--transmission", sy_trans, "Transmission map (.pgm/.png)");
  auto* sy_t_opt = synth->add_option("--uniform-t", sy_t, "Constant transmission");
  sy_trans_opt->excludes(sy_t_opt);
  synth->add_option("--background", sy_bg, "Background light r,g,b in [0,1]")->required();
  synth->add_option("--out", sy_out, "Output image")->required();

  // train
  auto* trn = cli.add_subcommand("train", "Train the network on a manifest of input/reference pairs");
  std::string tn_manifest, tn_config, tn_weights, tn_trace;
  std::size_t tn_steps = 0;
  trn->add_option("--manifest", tn_manifest, "Dataset manifest JSON");
  trn->add_option("--config", tn_config, "Run config JSON");
  trn->add_option("--out-weights", tn_weights, "Weights output");
  trn->add_option("--trace", tn_trace, "CSV loss trace output");
  auto* tn_steps_opt = trn->add_option("--steps", tn_steps, "Override train.steps");

  // evaluate
  auto* eval = cli.add_subcommand("evaluate", "Score enhanced results");
  std::string ev_manifest, ev_results, ev_layout, ev_report;
  bool ev_no_ref = false;
  eval->add_option("--manifest", ev_manifest, "Dataset manifest JSON")->required();
  eval->add_option("--results", ev_results, "Directory of results named like the manifest inputs")->required();
  eval->add_option("--layout", ev_layout, "Color checker layout JSON");
  eval->add_option("--out-report", ev_report, "Report JSON; the text table goes next to it as .txt")->required();
  eval->add_flag("--no-reference", ev_no_ref, "Skip full-reference metrics");

  // config
  auto* cfg = cli.add_subcommand("config", "Inspect run configurations");
  cfg->require_subcommand(1);
  auto* dump = cfg->add_subcommand("dump", "Print the fully defaulted configuration");
  std::string dump_from;
  dump->add_option("--config", dump_from, "Start from this file instead of the defaults");
  auto* validate = cfg->add_subcommand("validate", "List every problem in a configuration file");
  std::string validate_path;
  validate->add_option("file", validate_path, "Config JSON")->required();

  std::vector<const char*> argv{"ucolor"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    cli.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return cli.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  if (*seed_opt) g.seed = seed_value;
  int threads = g.threads;
  if (threads == 0) {
    if (const char* env = std::getenv("UCOLOR_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) kernels::set_threads(threads);
  auto say = [&](const std::string& s) {
    if (!g.quiet) out << s << "\n";
  };

  try {
    if (enhance->parsed()) {
      if (en_input.empty() == en_input_dir.empty()) throw ConfigError("enhance needs exactly one of --input, --input-dir");
      const Model m = load_model(en_weights, en_config);
      if (!en_input.empty()) {
        io::write_image(enhance_any_size(io::read_image(en_input), m), en_out);
        say("wrote " + en_out);
        return kOk;
      }
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(en_input_dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const fs::path target = fs::path(en_out) / fs::relative(f, en_input_dir);
        io::write_image(enhance_any_size(io::read_image(f), m), target);
        say("wrote " + target.string());
      }
      return kOk;
    }

    if (trans->parsed()) {
      const Image img = io::read_image(tr_input);
      const auto a = physics::estimate_background_light(img);
      const auto t = physics::estimate_transmission(img, a, physics::prior_from_string(tr_prior), tr_patch);
      io::GrayBytes bytes = io::quantize(t);
      // Reverse from the quantized forward map so the two files are exact complements.
      if (tr_reverse) {
        for (auto& b : bytes.data) b = static_cast<std::uint8_t>(255 - b);
      }
      io::write_gray(bytes, tr_out);
      out << "A = " << fmt("%.6f", a.r) << " " << fmt("%.6f", a.g) << " " << fmt("%.6f", a.b) << "\n";
      return kOk;
    }

    if (restore->parsed()) {
      const Image img = io::read_image(rs_input);
      const auto r = physics::classical_restore(img, physics::prior_from_string(rs_prior), rs_floor, rs_patch);
      io::write_image(r.image, rs_out);
      if (r.degenerate) err << "warning: degenerate input: transmission below t-floor everywhere\n";
      say("A = " + fmt("%.6f", r.light.r) + " " + fmt("%.6f", r.light.g) + " " + fmt("%.6f", r.light.b));
      return kOk;
    }

    if (synth->parsed()) {
      const Image clean = io::read_image(sy_clean);
      const auto a = parse_background(sy_bg);
      TransmissionMap t;
      if (!sy_trans.empty()) {
        t = io::read_transmission(sy_trans);
      } else if (*sy_t_opt) {
        if (!(sy_t >= 0.0 && sy_t <= 1.0)) throw DomainError("--uniform-t must lie in [0,1]");
        t = TransmissionMap(clean.height, clean.width, sy_t);
      } else {
        throw ConfigError("synthesize needs --transmission or --uniform-t");
      }
      io::write_image(physics::synthesize(clean, t, a), sy_out);
      say("wrote " + sy_out);
      return kOk;
    }

    if (trn->parsed()) {
      config::RunConfig rc = tn_config.empty() ? config::RunConfig{} : config::load(tn_config);
      if (g.seed) rc.seed = *g.seed;
      rc.train.seed = rc.seed;
      if (*tn_steps_opt) rc.train.steps = tn_steps;
      if (!tn_manifest.empty()) rc.paths.manifest = tn_manifest;
      if (!tn_weights.empty()) rc.paths.weights = tn_weights;
      if (!tn_trace.empty()) rc.paths.trace = tn_trace;
      if (rc.paths.manifest.empty()) throw ConfigError("train needs --manifest (or paths.manifest)");
      if (rc.paths.weights.empty()) throw ConfigError("train needs --out-weights (or paths.weights)");

      const auto manifest = io::load_manifest(rc.paths.manifest);
      std::vector<train::TrainingPair> data;
      for (const auto& e : manifest.entries) {
        if (!e.reference) throw ConfigError("train: manifest entry " + e.input + " has no reference");
        data.push_back({e.input, io::read_image(manifest.resolve(e.input)), io::read_image(manifest.resolve(*e.reference))});
      }
      std::string trace = train::trace_header() + "\n";
      const std::size_t every = std::max<std::size_t>(1, rc.train.steps / 10);
      const auto result = train::train(data, rc.model, rc.train, [&](const train::StepRecord& r) {
        trace += train::trace_line(r) + "\n";
        if ((r.step + 1) % every == 0) say("step " + std::to_string(r.step + 1) + " loss " + fmt("%.6g", r.total));
      });
      io::save_weights(rc.paths.weights, rc.model, result.weights);
      if (!rc.paths.trace.empty()) io::atomic_write(rc.paths.trace, trace);
      if (result.trace.empty()) {
        out << "final loss: n/a (0 steps)\n";
      } else {
        out << "final loss: " << fmt("%.9g", result.trace.back().total) << "\n";
      }
      return kOk;
    }

    if (eval->parsed()) {
      const auto manifest = io::load_manifest(ev_manifest);
      std::optional<metrics::ColorCheckerLayout> layout;
      if (!ev_layout.empty()) layout = io::load_layout(ev_layout);
      const auto report = io::evaluate(manifest, ev_results, !ev_no_ref, layout ? &*layout : nullptr);
      const std::string table = metrics::report_table(report);
      io::atomic_write(ev_report, metrics::report_json(report));
      fs::path table_path = ev_report;
      table_path.replace_extension(".txt");
      io::atomic_write(table_path, table);
      if (!g.quiet) out << table;
      if (!report.missing.empty()) {
        err << "error: " << report.missing.size() << " result(s) missing\n";
        return kIo;
      }
      return kOk;
    }

    if (dump->parsed()) {
      config::RunConfig rc = dump_from.empty() ? config::RunConfig{} : config::load(dump_from);
      if (g.seed) rc.seed = *g.seed;
      out << config::dump(rc);
      return kOk;
    }

    if (validate->parsed()) {
      const auto problems = config::check(io::read_file(validate_path));
      for (const auto& p : problems) err << validate_path << ": " << p << "\n";
      if (!problems.empty()) return kUsage;
      say(validate_path + ": ok");
      return kOk;
    }
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace ucolor::app
