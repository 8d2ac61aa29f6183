// Experiment harness: runs the equivalence, consistency, complexity,
// collapse, and positional batteries from a JSON configuration and writes
// CSV tables, SVG plots, and a summary.json into the output directory.
//
// Exit codes: 0 all checks passed, 1 at least one tolerance check failed,
// 2 configuration or I/O problem.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ccmc/ccmc.hpp"

namespace {

constexpr const char* kSections[] = {"equivalence", "consistency",
                                     "complexity", "collapse", "positional"};

bool known_section(const std::string& name) {
  for (const char* s : kSections)
    if (name == s) return true;
  return false;
}

// Parses the value half of KEY=VALUE as JSON when possible (numbers,
// arrays, booleans) and as a plain string otherwise.
nlohmann::json parse_override_value(const std::string& text) {
  nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
  if (parsed.is_discarded()) return nlohmann::json(text);
  return parsed;
}

// Applies one --set entry. Dotted keys name a section explicitly
// ("collapse.T=2000"); bare keys go to the active subcommand's section.
void apply_override(nlohmann::json& config, const std::string& entry,
                    const std::string& active) {
  const std::size_t eq = entry.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ccmc::ConfigError("override '" + entry + "' is not KEY=VALUE");
  const std::string key = entry.substr(0, eq);
  const nlohmann::json value = parse_override_value(entry.substr(eq + 1));

  const std::size_t dot = key.find('.');
  if (dot == std::string::npos) {
    if (active == "all")
      throw ccmc::ConfigError("override '" + entry +
                              "' needs a section prefix when running all "
                              "experiments, e.g. collapse." + key);
    config[active][key] = value;
    return;
  }
  const std::string section = key.substr(0, dot);
  const std::string inner = key.substr(dot + 1);
  if (!known_section(section))
    throw ccmc::ConfigError("override '" + entry + "' names unknown section '" +
                            section + "'");
  if (inner.empty() || inner.find('.') != std::string::npos)
    throw ccmc::ConfigError("override '" + entry +
                            "' must be section.key=VALUE");
  config[section][inner] = value;
}

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  const std::string text = ccmc::read_text_file(path);
  nlohmann::json config = nlohmann::json::parse(text, nullptr, false);
  if (config.is_discarded())
    throw ccmc::ConfigError("configuration file '" + path +
                            "' is not valid JSON");
  if (!config.is_object())
    throw ccmc::ConfigError("configuration root must be a JSON object");
  for (auto it = config.begin(); it != config.end(); ++it)
    if (!known_section(it.key()))
      throw ccmc::ConfigError("unknown configuration section '" + it.key() +
                              "'");
  return config;
}

nlohmann::json section_or_null(const nlohmann::json& config,
                               const char* name) {
  if (config.contains(name)) return config.at(name);
  return nlohmann::json();
}

void write_tables(const ccmc::ExperimentReport& report,
                  const std::filesystem::path& out_dir) {
  for (const auto& table : report.tables)
    ccmc::write_text_file((out_dir / (table.name + ".csv")).string(),
                          table.to_csv());
}

// Log-log plot of median excess loss against sample size.
void plot_complexity(const ccmc::ExperimentReport& report,
                     const std::filesystem::path& out_dir) {
  for (const auto& table : report.tables) {
    if (table.name != "complexity_medians") continue;
    ccmc::PlotSeries medians{"median excess", {}, {}};
    bool positive = true;
    for (const auto& row : table.rows) {
      medians.x.push_back(row[0]);
      medians.y.push_back(row[1]);
      positive = positive && row[1] > 0.0;
    }
    if (!positive) return;  // log axis would reject the data
    ccmc::PlotOptions options;
    options.title = "Excess loss vs sample size";
    options.x_label = "samples n";
    options.y_label = "excess population loss";
    options.log_x = true;
    options.log_y = true;
    ccmc::write_text_file((out_dir / "complexity_medians.svg").string(),
                          ccmc::line_plot_svg({medians}, options));
  }
}

// Log-log plot of the weak-token frequency decay, one curve per p.
void plot_collapse(const ccmc::ExperimentReport& report,
                   const std::filesystem::path& out_dir) {
  for (const auto& table : report.tables) {
    if (table.name != "collapse_freq") continue;
    std::vector<ccmc::PlotSeries> series;
    bool positive = true;
    for (const auto& row : table.rows) {
      const double p = row[0];
      if (series.empty() || series.back().label != "p=" + ccmc::format_double(p)) {
        series.push_back({"p=" + ccmc::format_double(p), {}, {}});
      }
      series.back().x.push_back(row[1]);
      series.back().y.push_back(row[2]);
      positive = positive && row[1] > 0.0 && row[2] > 0.0;
    }
    if (series.empty() || !positive) return;
    ccmc::PlotOptions options;
    options.title = "Weak-token frequency decay";
    options.x_label = "steps t";
    options.y_label = "mean weak-token frequency";
    options.log_x = true;
    options.log_y = true;
    ccmc::write_text_file((out_dir / "collapse_freq.svg").string(),
                          ccmc::line_plot_svg(series, options));
  }
}

void print_checks(const ccmc::ExperimentReport& report) {
  std::printf("== %s ==\n", report.name.c_str());
  for (const auto& c : report.checks)
    std::printf("  %-36s %s (%.6g %s %.6g)\n", c.name.c_str(),
                c.pass ? "PASS" : "FAIL", c.value, c.cmp.c_str(), c.bound);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-conditioned Markov chain laboratory"};
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t master_seed = 0;
  int threads = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON experiment configuration");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", master_seed, "master seed");
  app.add_option("--set", overrides,
                 "KEY=VALUE configuration override, repeatable");
  app.add_option("--threads", threads, "worker thread count");

  app.add_subcommand("equivalence", "attention law vs chain law")->fallthrough();
  app.add_subcommand("consistency", "recovery on connected and split supports")
      ->fallthrough();
  app.add_subcommand("complexity", "excess loss vs sample size")->fallthrough();
  app.add_subcommand("collapse", "single-trajectory degeneration")->fallthrough();
  app.add_subcommand("positional", "position-aware law")->fallthrough();
  app.add_subcommand("all", "every experiment in sequence")->fallthrough();
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads < 1) throw ccmc::ConfigError("--threads must be at least 1");
    const std::string subcommand = app.get_subcommands().front()->get_name();

    nlohmann::json config = load_config(config_path);
    for (const auto& entry : overrides)
      apply_override(config, entry, subcommand);

    std::vector<std::string> selected;
    if (subcommand == "all")
      selected.assign(std::begin(kSections), std::end(kSections));
    else
      selected.push_back(subcommand);

    const std::filesystem::path out_path(out_dir);
    std::filesystem::create_directories(out_path);

    std::vector<ccmc::ExperimentReport> reports;
    for (const std::string& name : selected) {
      const nlohmann::json section = section_or_null(config, name.c_str());
      const auto started = std::chrono::steady_clock::now();
      ccmc::ExperimentReport report;
      if (name == "equivalence") {
        report = ccmc::run_equivalence(
            ccmc::EquivalenceConfig::from_json(section), master_seed, threads);
      } else if (name == "consistency") {
        report = ccmc::run_consistency(
            ccmc::ConsistencyConfig::from_json(section), master_seed, threads);
      } else if (name == "complexity") {
        report = ccmc::run_complexity(
            ccmc::ComplexityConfig::from_json(section), master_seed, threads);
      } else if (name == "collapse") {
        report = ccmc::run_collapse(ccmc::CollapseConfig::from_json(section),
                                    master_seed, threads);
      } else {
        report = ccmc::run_positional(
            ccmc::PositionalConfig::from_json(section), master_seed, threads);
      }
      report.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        started)
              .count();
      std::fprintf(stderr, "[time] %s: %.2fs\n", report.name.c_str(),
                   report.wall_seconds);

      write_tables(report, out_path);
      if (name == "complexity") plot_complexity(report, out_path);
      if (name == "collapse") plot_collapse(report, out_path);
      print_checks(report);
      reports.push_back(std::move(report));
    }

    bool pass = true;
    nlohmann::json experiments = nlohmann::json::array();
    for (const auto& report : reports) {
      experiments.push_back(report.summary());
      pass = pass && report.pass();
    }
    nlohmann::json summary = {
        {"invocation",
         {{"subcommand", subcommand},
          {"master_seed", master_seed},
          {"threads", threads},
          {"overrides", overrides}}},
        {"experiments", experiments},
        {"pass", pass}};
    ccmc::write_text_file((out_path / "summary.json").string(),
                          summary.dump(2) + "\n");

    std::printf("RESULT: %s\n", pass ? "PASS" : "FAIL");
    return pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
