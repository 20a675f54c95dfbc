// umafd command-line driver.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "umafd/config.hpp"
#include "umafd/data.hpp"
#include "umafd/errors.hpp"
#include "umafd/protocols.hpp"
#include "umafd/synth.hpp"

namespace fs = std::filesystem;
using namespace umafd;

namespace {

RunConfig read_config(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (const char* env = std::getenv("UMAFD_SEED"); env && *env) {
    cfg.set_seed(parse_run_config(std::string("seed=") + env).train.seed);
  }
  cfg.validate();
  return cfg;
}

// Backbone layout of a checkpoint, taken from its metadata sidecar.
RunConfig checkpoint_config(const fs::path& ckpt) {
  fs::path meta = ckpt;
  meta.replace_extension(".meta.json");
  std::ifstream in(meta);
  if (!in) throw FileError("cannot read checkpoint metadata " + meta.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("config")) throw FileError("corrupt checkpoint metadata " + meta.string());
  return parse_run_config(j["config"].get<std::string>());
}

void print_result(const ProtocolResult& r) {
  std::cout << kReportHeader << '\n'
            << to_string(r.protocol) << ',' << r.seed << ',' << format_percent_row(r.metrics) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  CLI::App app{"Unsupervised RGB-to-depth adaptation for fall detection"};
  app.require_subcommand(1);

  std::string out, config, data_dir, protocol_name, ckpt;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic paired RGB/depth dataset");
  synth_cmd->add_option("--out", out, "Dataset directory")->required();
  synth_cmd->add_option("--config", config, "key=value run config");

  const std::vector<std::string> protocols{"baseline", "umafd", "supervised-target"};
  protocol_name = "umafd";

  auto* train_cmd = app.add_subcommand("train", "Train under a protocol and report DEPTH TEST metrics");
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--config", config, "key=value run config");
  train_cmd->add_option("--protocol", protocol_name, "baseline | umafd | supervised-target")
      ->required()
      ->check(CLI::IsMember(protocols));
  train_cmd->add_option("--out", out, "Output directory")->required();
  bool resume = false;
  train_cmd->add_flag("--resume", resume, "Continue from the newest epoch checkpoint in --out");
  std::string init;
  train_cmd->add_option("--init", init, "Start from this checkpoint's parameters (heads absent from it stay fresh)")
      ->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate an existing checkpoint on DEPTH TEST");
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint .bin")->required();
  eval_cmd->add_option("--config", config, "key=value run config (default: the checkpoint's own)");
  eval_cmd->add_option("--protocol", protocol_name, "Protocol tag for the report")
      ->check(CLI::IsMember(protocols));
  eval_cmd->add_option("--out", out, "Output directory")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the V-01..V-06 ablation ladder");
  ablate_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  ablate_cmd->add_option("--config", config, "key=value run config");
  ablate_cmd->add_option("--out", out, "Output directory")->required();

  auto* export_cmd = app.add_subcommand("export-embeddings", "Write pooled embeddings of every TEST clip");
  export_cmd->add_option("--ckpt", ckpt, "Checkpoint .bin")->required();
  export_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  export_cmd->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const Protocol protocol = protocol_from_name(protocol_name);
    if (*synth_cmd) {
      const RunConfig cfg = read_config(config);
      const auto records = synth::generate(cfg.synth, out);
      std::cout << "wrote " << records.size() << " clips to " << out << '\n';
    } else if (*train_cmd) {
      const RunConfig cfg = read_config(config);
      const auto records = data::load_manifest(data_dir);
      data::ClipSource source(cfg.dims());
      ProtocolOptions po;
      po.resume = resume;
      if (!init.empty()) po.init_checkpoint = fs::path(init);
      print_result(run_protocol(protocol, records, source, cfg, out, po));
    } else if (*eval_cmd) {
      RunConfig cfg = config.empty() ? checkpoint_config(ckpt) : read_config(config);
      cfg.train.epochs = 0;
      const auto records = data::load_manifest(data_dir);
      data::ClipSource source(cfg.dims());
      ProtocolOptions po;
      po.init_checkpoint = fs::path(ckpt);
      print_result(run_protocol(protocol, records, source, cfg, out, po));
    } else if (*ablate_cmd) {
      const RunConfig cfg = read_config(config);
      const auto records = data::load_manifest(data_dir);
      data::ClipSource source(cfg.dims());
      const auto rows = ablation(records, source, cfg, out);
      std::cout << kAblationHeader << '\n';
      for (const auto& r : rows) std::cout << r.stage << ',' << format_percent_row(r.result.metrics) << '\n';
    } else if (*export_cmd) {
      const RunConfig cfg = checkpoint_config(ckpt);
      const auto records = data::load_manifest(data_dir);
      data::ClipSource source(cfg.dims());
      export_embeddings(ckpt, records, source, cfg.backbone, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
