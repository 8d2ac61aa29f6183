#include <catch2/catch_amalgamated.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string lab_binary() {
  if (const char* bin = std::getenv("CCMC_LAB_BIN")) return bin;
  // Fall back to the sibling binary when run outside the test driver.
  const fs::path self = fs::read_symlink("/proc/self/exe");
  const fs::path lab = self.parent_path() / "ccmc-lab";
  REQUIRE(fs::exists(lab));
  return lab.string();
}

int run_cli(const std::string& args) {
  const std::string cmd =
      lab_binary() + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "ccmc-lab-tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("a passing run exits zero and writes summary plus tables") {
  const fs::path out = fresh_dir("pass");
  const int code = run_cli("positional --seed 3 --set K=3 --set L=4 --set trials=5 --out " +
                           out.string());
  REQUIRE(code == 0);

  const nlohmann::json summary =
      nlohmann::json::parse(slurp(out / "summary.json"));
  REQUIRE(summary["pass"] == true);
  REQUIRE(summary["invocation"]["subcommand"] == "positional");
  REQUIRE(summary["invocation"]["master_seed"] == 3);
  REQUIRE(summary["experiments"].size() == 1);
  REQUIRE(summary["experiments"][0]["config"]["K"] == 3);
  REQUIRE(summary["experiments"][0]["config"]["trials"] == 5);
  REQUIRE(fs::exists(out / "positional.csv"));
}

TEST_CASE("identical invocations produce byte-identical artifacts") {
  const std::string flags = "equivalence --seed 11"
      " --set 'K_list=[2,3]' --set weights_per_K=4 --set prompts_per_weight=5"
      " --set 'bijection_K_list=[3]' --set bijection_trials=3"
      " --set nullspace_trials=5 --out ";
  const fs::path a = fresh_dir("rerun-a");
  const fs::path b = fresh_dir("rerun-b");
  REQUIRE(run_cli(flags + a.string()) == 0);
  REQUIRE(run_cli(flags + b.string()) == 0);

  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path twin = b / entry.path().filename();
    REQUIRE(fs::exists(twin));
    REQUIRE(slurp(entry.path()) == slurp(twin));
    ++compared;
  }
  REQUIRE(compared >= 4);  // summary plus one CSV per battery
}

TEST_CASE("config files feed the drivers and flags override them") {
  const fs::path out = fresh_dir("config");
  const fs::path cfg = out / "lab.json";
  {
    std::ofstream f(cfg);
    f << R"({"positional": {"K": 4, "trials": 6}})";
  }
  REQUIRE(run_cli("positional --config " + cfg.string() +
                  " --set trials=3 --out " + out.string()) == 0);
  const nlohmann::json summary =
      nlohmann::json::parse(slurp(out / "summary.json"));
  REQUIRE(summary["experiments"][0]["config"]["K"] == 4);
  REQUIRE(summary["experiments"][0]["config"]["trials"] == 3);
}

TEST_CASE("a run whose checks miss tolerance exits one") {
  const fs::path out = fresh_dir("fail");
  // One optimizer step cannot reach the fitting tolerance, so the
  // consistency checks must report a miss without crashing.
  const int code = run_cli("consistency --seed 5 --set K=3 --set max_iters=1 --out " +
                           out.string());
  REQUIRE(code == 1);
  const nlohmann::json summary =
      nlohmann::json::parse(slurp(out / "summary.json"));
  REQUIRE(summary["pass"] == false);
}

TEST_CASE("usage and configuration errors exit two") {
  const fs::path out = fresh_dir("errors");
  REQUIRE(run_cli("positional --no-such-flag") == 2);
  REQUIRE(run_cli("") == 2);  // missing subcommand
  REQUIRE(run_cli("positional --config /no/such/file.json --out " +
                  out.string()) == 2);
  REQUIRE(run_cli("positional --set bogus_key=1 --out " + out.string()) == 2);
  REQUIRE(run_cli("all --set K=3 --out " + out.string()) == 2);  // ambiguous key
  REQUIRE(run_cli("positional --set K=oops --out " + out.string()) == 2);

  const fs::path cfg = out / "broken.json";
  {
    std::ofstream f(cfg);
    f << "{ not json";
  }
  REQUIRE(run_cli("positional --config " + cfg.string() + " --out " +
                  out.string()) == 2);
}

TEST_CASE("help is not an error") {
  REQUIRE(run_cli("--help") == 0);
}
