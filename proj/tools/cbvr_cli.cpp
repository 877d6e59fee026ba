// Command-line entry point: cbvr <command> [--seed N] [--config FILE] [--out DIR] [--threads N] [--key value ...]
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbvr/error.hpp"
#include "cbvr/harness.hpp"
#include "cbvr/io.hpp"
#include "cbvr/kernels.hpp"
#include "cbvr/synth.hpp"

namespace {

const std::vector<std::string> kPathKeys{"data", "descriptors", "features", "models", "heldout", "test", "ranked", "initial"};

// Turns the leftover "--key value" / "--key=value" arguments into settings.
std::map<std::string, std::string> parse_settings(const std::vector<std::string>& extras) {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() < 3) throw cbvr::ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw cbvr::ConfigError("missing value for --" + key);
      value = extras[++i];
    }
    for (char& c : key)
      if (c == '-') c = '_';
    out[key] = value;
  }
  return out;
}

void absolutize(std::map<std::string, std::string>& params) {
  for (const auto& k : kPathKeys) {
    auto it = params.find(k);
    if (it != params.end() && !it->second.empty()) it->second = std::filesystem::absolute(it->second).lexically_normal().string();
  }
}

int execute(const std::string& command, const std::map<std::string, std::string>& params, const std::filesystem::path& out,
            int threads) {
  cbvr::set_thread_count(threads);
  const auto result = cbvr::run_command(command, params, out);
  cbvr::write_manifest(out, command, params, result, threads);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-based video retrieval toolkit"};
  app.require_subcommand(1);
  std::string seed = "0", config, out = "out";
  int threads = 1;
  // Global flags are accepted before or after the command name.
  auto add_globals = [&](CLI::App* a) {
    a->add_option("--seed", seed, "master seed");
    a->add_option("--config", config, "key = value settings file");
    a->add_option("--out", out, "output directory");
    a->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };
  add_globals(&app);

  std::map<std::string, CLI::App*> subs;
  for (const auto& name : cbvr::command_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->allow_extras();
    add_globals(sub);
    subs[name] = sub;
  }
  std::string manifest_path;
  auto* replay = app.add_subcommand("replay", "rerun a command from its manifest.json");
  replay->add_option("manifest", manifest_path, "manifest path")->required();
  add_globals(replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*replay) {
      const auto m = cbvr::read_manifest(manifest_path);
      execute(m.command, m.params, out, threads);
      int mismatches = 0;
      for (const auto& rel : m.outputs) {
        const auto h = cbvr::io::fnv1a_hex(cbvr::io::read_file(std::filesystem::path(out) / rel));
        if (h != m.output_hashes.at(rel)) {
          std::cerr << "replay mismatch: " << rel << "\n";
          ++mismatches;
        }
      }
      if (mismatches) throw cbvr::InternalError("replay produced " + std::to_string(mismatches) + " differing outputs");
      std::cout << "replay: " << m.outputs.size() << " outputs identical\n";
      return 0;
    }
    for (const auto& [name, sub] : subs) {
      if (!*sub) continue;
      std::map<std::string, std::string> params;
      if (!config.empty()) params = cbvr::parse_config_text(cbvr::io::read_file(config));
      for (const auto& [k, v] : parse_settings(sub->remaining())) params[k] = v;
      if (app.count("--seed") || sub->count("--seed") || !params.count("seed")) params["seed"] = seed;
      absolutize(params);
      return execute(name, params, out, threads);
    }
  } catch (const cbvr::Error& e) {
    std::cerr << "cbvr: " << e.what() << "\n";
    return cbvr::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "cbvr: internal error: " << e.what() << "\n";
    return 4;
  }
  return 4;
}
