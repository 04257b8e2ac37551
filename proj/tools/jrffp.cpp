// jrffp: command-line front end for the open-set RF fingerprinting pipeline.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 data/format
// error, 4 training divergence.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "jrffp/pipeline.hpp"

namespace {

enum Exit : int { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDiverged = 4 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
  std::string packet;
  std::string device;
  std::uint64_t index = 0;
};

jrffp::CommandContext make_context(const Options& o) {
  jrffp::RunConfig c = jrffp::load_run_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.resolve();
  }
  jrffp::CommandContext ctx{c, o.out.empty() ? c.output_dir : std::filesystem::path(o.out), {}};
  if (!o.quiet) ctx.log = [](const std::string& line) { std::cerr << "[jrffp] " << line << '\n'; };
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set RF fingerprint identification: synthesize, train, evaluate, infer"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Overrides the configured seed");
    sub->add_option("--out", o.out, "Run directory (default: output_dir from the config)");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };
  auto* synth = app.add_subcommand("synth", "Generate train/test/calibration archives");
  auto* train = app.add_subcommand("train", "Train RFFP and SIA, write checkpoints and enrollment");
  auto* eval = app.add_subcommand("eval", "Calibrate the threshold and compute all metrics on the test archive");
  auto* sweep = app.add_subcommand("sweep-snr", "Re-evaluate at each configured test SNR");
  auto* ablation = app.add_subcommand("ablation", "Train and evaluate the fingerprint-fed siamese variant");
  auto* infer = app.add_subcommand("infer", "Decide one cf32 packet file; Decision JSON on stdout");
  auto* packet = app.add_subcommand("packet", "Write one synthetic received packet of a device as cf32");
  for (auto* sub : {synth, train, eval, sweep, ablation, infer, packet}) common(sub);
  infer->add_option("packet", o.packet, "cf32 packet file")->required();
  packet->add_option("--device", o.device, "device_id from the scenario")->required();
  packet->add_option("--index", o.index, "Packet index (selects the random stream)");
  packet->add_option("file", o.packet, "Output cf32 file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const jrffp::CommandContext ctx = make_context(o);
    if (synth->parsed()) {
      jrffp::cmd_synth(ctx);
    } else if (train->parsed()) {
      const auto r = jrffp::cmd_train(ctx);
      std::cerr << "[jrffp] trained " << r.epochs_run << " epochs, final L_ce "
                << (r.ce_curve.empty() ? 0.0 : r.ce_curve.back()) << '\n';
    } else if (eval->parsed()) {
      const auto e = jrffp::cmd_eval(ctx);
      std::cout << "closed_set_accuracy " << e.closed_set.accuracy << "\nauc " << e.roc.auc << "\neer " << e.roc.eer
                << "\nthreshold " << e.threshold << '\n';
    } else if (sweep->parsed()) {
      jrffp::write_sweep_csv(std::cout, jrffp::cmd_sweep_snr(ctx));
    } else if (ablation->parsed()) {
      const auto a = jrffp::cmd_ablation(ctx);
      std::cout << "jrffp_sc_auc " << a.jrffp.auc << "\nsia_rff_auc " << a.sia_rff.auc << '\n';
    } else if (infer->parsed()) {
      jrffp::cmd_infer(ctx, o.packet, std::cout);
    } else if (packet->parsed()) {
      jrffp::cmd_packet(ctx, o.device, o.index, o.packet);
    }
    return kOk;
  } catch (const jrffp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const jrffp::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const jrffp::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kData;
  } catch (const jrffp::InputError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << '\n';
    return kOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}
