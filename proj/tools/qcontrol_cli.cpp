// qcontrol: run one experiment from a flat key = value config.
//
//   qcontrol sd --config runs/sd.cfg --seed 7 --out out/sd
//   qcontrol validate --config runs/dos.cfg
//   qcontrol schema
#include "qcontrol/harness.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

int report_error(const std::string& kind, const std::vector<std::string>& messages) {
  std::cout << qcontrol::error_json(kind, messages) << std::endl;
  if (kind == "resource_cap") return 3;
  if (kind == "invalid_config") return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bounded-field quantum control experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file, or a manifest.json to replay");
    sub->add_option("--seed", seed, "base seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--set", overrides, "key=value override, repeatable");
  };

  std::vector<CLI::App*> method_commands;
  for (const auto& m : qcontrol::known_methods()) {
    auto* sub = app.add_subcommand(m, "run the " + m + " experiment");
    add_common(sub);
    method_commands.push_back(sub);
  }
  auto* validate_cmd = app.add_subcommand("validate", "check a config without running it");
  add_common(validate_cmd);
  auto* schema_cmd = app.add_subcommand("schema", "list every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (schema_cmd->parsed()) {
    for (const auto& e : qcontrol::config_schema()) {
      std::cout << e.key << " = " << e.fallback << "    # " << e.doc << '\n';
    }
    return 0;
  }

  try {
    qcontrol::ExperimentConfig config;
    if (!config_path.empty()) config = qcontrol::load_config(config_path);
    for (const auto& o : overrides) qcontrol::apply_override(config, o);
    CLI::App* active = validate_cmd->parsed() ? validate_cmd : nullptr;
    for (auto* sub : method_commands) {
      if (sub->parsed()) {
        active = sub;
        config.values["method"] = sub->get_name();
      }
    }
    if (active->count("--seed") > 0) config.values["seed"] = std::to_string(seed);
    if (active->count("--out") > 0) config.values["output"] = out_dir;

    const auto errors = qcontrol::validate(config);
    if (validate_cmd->parsed()) {
      if (errors.empty()) {
        std::cout << R"({"ok":true})" << std::endl;
        return 0;
      }
      const bool cap = std::any_of(errors.begin(), errors.end(),
                                   [](const std::string& e) { return e.rfind("resource cap", 0) == 0; });
      return report_error(cap ? "resource_cap" : "invalid_config", errors);
    }
    std::string dir = config.get("output");
    if (dir.empty()) dir = "out/" + config.get("method");
    const auto report = qcontrol::run(config, dir);
    std::cout << R"({"ok":true,"output":")" << report.output_dir.string() << R"(","wall_time_seconds":)"
              << report.wall_time_seconds << '}' << std::endl;
    return 0;
  } catch (const qcontrol::ConfigError& e) {
    return report_error(e.kind(), e.messages());
  } catch (const std::exception& e) {
    return report_error("runtime_error", {e.what()});
  }
}
