#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gazekit/harness/commands.hpp"
#include "gazekit/service/server.hpp"

namespace gazekit::harness {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitData = 3, kExitNumeric = 4 };

inline int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Config: return kExitConfig;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Numeric: return kExitNumeric;
  }
  return kExitNumeric;
}

/// Local HTTP service for the gesture studio; blocks until the server stops.
inline Command serve_command(std::ostream& log) {
  return {"serve", "run the interaction service over HTTP",
          with_globals({{"host", "127.0.0.1", "bind address"},
                        {"port", "8080", "TCP port"},
                        {"weights", "", "trained gesture classifier weights"},
                        {"catalog", "", "pattern catalog JSON (built-in when empty)"}}),
          [&log](const Settings& s) {
            std::optional<gesture::GestureClassifier> net;
            if (s.has("weights")) {
              net.emplace();
              net->load(s.str("weights"));
            } else {
              log << "no classifier weights given: /classify answers 503\n";
            }
            const auto port = s.integer("port");
            require(port > 0 && port < 65536, ErrorKind::Configuration, "port must be in 1..65535");
            service::InteractionService svc(catalog_from(s), std::move(net));
            log << "listening on http://" << s.str("host") << ":" << port << "\n" << std::flush;
            if (!svc.listen(s.str("host"), static_cast<int>(port)))
              fail(ErrorKind::Io, "cannot bind " + s.str("host") + ":" + std::to_string(port));
            return start_report("serve", s);
          }};
}

inline std::vector<Command> all_commands(std::ostream& log) {
  return {gen_gaze_command(),      gen_gestures_command(),     train_gaze_command(),
          train_gestures_command(), eval_board_command(),      eval_gestures_command(),
          sweep_resolution_command(), timing_report_command(), serve_command(log)};
}

/// Resolves settings for `cmd`: defaults, desk profile, config file, then the
/// explicitly given command-line values.
inline Settings resolve_settings(const Command& cmd, bool desk, const std::string& config_path,
                                 const std::map<std::string, std::string>& cli_values) {
  std::map<std::string, std::string> file;
  if (!config_path.empty()) {
    file = read_config_file(config_path);
    if (auto it = file.find("desk"); it != file.end()) {
      const auto v = it->second;
      desk = desk || v == "1" || v == "true" || v == "yes" || v == "on";
      file.erase(it);
    }
  }
  Settings s(cmd.keys, desk);
  s.apply(file);
  s.apply(cli_values);
  return s;
}

/// Full command line (argv[0] excluded) -> exit code. Errors go to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  auto commands = all_commands(err);
  CLI::App app{"gazekit: gaze estimation and gaze-gesture experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string seed, config, outdir;
  bool desk = false;
  auto* seed_opt = app.add_option("--seed", seed, "master random seed");
  app.add_option("--config", config, "flat key = value settings file");
  auto* out_opt = app.add_option("--out", outdir, "output directory");
  app.add_flag("--desk", desk, "use the desk-scale profile");

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::vector<std::pair<std::string, CLI::Option*>>> options;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.description);
    subs[c.name] = sub;
    for (const auto& k : c.keys) {
      if (k.key == "seed" || k.key == "out") continue;
      std::string help = k.help + " [default " + (k.default_value.empty() ? "none" : k.default_value);
      if (k.desk_value) help += ", desk " + *k.desk_value;
      help += "]";
      options[c.name].emplace_back(k.key, sub->add_option("--" + k.key, values[c.name][k.key], help));
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    const int code = app.exit(e, out, msg);
    err << msg.str();
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (const auto& c : commands) {
    if (!subs[c.name]->parsed()) continue;
    try {
      std::map<std::string, std::string> given;
      for (const auto& [key, opt] : options[c.name])
        if (opt->count() > 0) given[key] = values[c.name][key];
      if (seed_opt->count() > 0) given["seed"] = seed;
      if (out_opt->count() > 0) given["out"] = outdir;
      const Settings s = resolve_settings(c, desk, config, given);
      const auto rep = c.run(s);
      if (c.name != "serve") {
        out << c.name << ": wrote " << s.str("out") << "/report.json\n";
        for (const auto& [k, v] : rep.metrics) out << "  " << k << " = " << fmt(v) << "\n";
      }
      return kExitOk;
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return exit_code_for(e.category());
    } catch (const nlohmann::json::exception& e) {
      err << "error: parse error: " << e.what() << "\n";
      return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
      err << "error: io error: " << e.what() << "\n";
      return kExitData;
    }
  }
  return kExitConfig;
}

}  // namespace gazekit::harness
