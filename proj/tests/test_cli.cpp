// End-to-end checks of the sparsity-audit binary: exit codes, output files,
// determinism of re-runs, config-file handling.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

#ifndef SPAUD_CLI_PATH
#error "SPAUD_CLI_PATH must be defined by the build"
#endif

const char* kCli = SPAUD_CLI_PATH;

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() /
          ("spaud_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    std::ofstream data(dir / "demo.csv");
    data << "y,d,grp,z,x0\n";
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0, 1);
    const char* cats[3] = {"a", "b", "c"};
    for (int i = 0; i < 80; ++i) {
      const int c = int(rng() % 3);
      const double z = g(rng), x0 = g(rng);
      const double d = g(rng) + 0.4 * c;
      const double y = 0.8 * d + 0.5 * c + 0.3 * z + g(rng);
      data << y << ',' << d << ',' << cats[c] << ',' << z << ',' << x0 << '\n';
    }
    std::ofstream recipe(dir / "r.txt");
    recipe << "control grp : categorical encode=onehot ref=auto\n"
              "control x0 : continuous center=mean powers=2\n"
              "hermite z degree=2\n";
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

int run(const std::string& args) {
  const std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path only_file_matching(const fs::path& dir, const std::string& prefix,
                            const std::string& ext) {
  fs::path hit;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && entry.path().extension() == ext) {
      REQUIRE(hit.empty());
      hit = entry.path();
    }
  }
  REQUIRE(!hit.empty());
  return hit;
}

}  // namespace

TEST_CASE("fit smoke: exit 0 and a json with ols and sbe blocks") {
  Workspace ws;
  const std::string base = "fit --data " + (ws.dir / "demo.csv").string() +
                           " --recipe " + (ws.dir / "r.txt").string() +
                           " --outcome y --treatment d --out " +
                           (ws.dir / "out").string();
  CHECK(run(base) == 0);
  const fs::path json = only_file_matching(ws.dir / "out", "fit_", ".json");
  const std::string body = slurp(json);
  CHECK(body.find("\"ols\"") != std::string::npos);
  CHECK(body.find("\"sbe\"") != std::string::npos);
  CHECK(body.find("\"efficiency\"") != std::string::npos);

  SUBCASE("re-running overwrites with identical bytes") {
    const std::string before = slurp(json);
    CHECK(run(base) == 0);
    CHECK(slurp(json) == before);
  }
}

TEST_CASE("bad invocations exit 1") {
  Workspace ws;
  CHECK(run("--frobnicate") == 1);
  CHECK(run("fit") == 1);  // missing required flags
  CHECK(run("fit --data /nonexistent.csv --recipe " +
            (ws.dir / "r.txt").string() + " --outcome y --treatment d") == 1);
  CHECK(run("theory --experiment bogus") != 0);
  // bad column name
  CHECK(run("fit --data " + (ws.dir / "demo.csv").string() + " --recipe " +
            (ws.dir / "r.txt").string() + " --outcome nope --treatment d") ==
        1);
}

TEST_CASE("test subcommand emits the report rows") {
  Workspace ws;
  CHECK(run("test --data " + (ws.dir / "demo.csv").string() + " --recipe " +
            (ws.dir / "r.txt").string() +
            " --outcome y --treatment d --format csv --with-rf --out " +
            (ws.dir / "out").string()) == 0);
  const std::string body =
      slurp(only_file_matching(ws.dir / "out", "test_", ".csv"));
  CHECK(body.find("hausman,H") != std::string::npos);
  CHECK(body.find("residual,OR") != std::string::npos);
  CHECK(body.find("residual,PR") != std::string::npos);
  CHECK(body.find("residual,RF") != std::string::npos);
}

TEST_CASE("sweep subcommand with svg and per-draw json") {
  Workspace ws;
  const std::string base =
      "sweep --kind collinear --draws 6 --seed 3 --svg --data " +
      (ws.dir / "demo.csv").string() + " --recipe " +
      (ws.dir / "r.txt").string() + " --outcome y --treatment d --out " +
      (ws.dir / "out").string();
  CHECK(run(base) == 0);
  const std::string csv =
      slurp(only_file_matching(ws.dir / "out", "sweep_", ".csv"));
  CHECK(csv.find("ols") != std::string::npos);
  const fs::path svg =
      only_file_matching(ws.dir / "out", "sweep_ols", ".svg");
  CHECK(slurp(svg).find("<svg") != std::string::npos);

  SUBCASE("deterministic re-run, same bytes") {
    const fs::path json = only_file_matching(ws.dir / "out", "sweep_", ".json");
    const std::string before = slurp(json);
    CHECK(run(base) == 0);
    CHECK(slurp(json) == before);
  }
}

TEST_CASE("simulate emits a rate table") {
  Workspace ws;
  CHECK(run("simulate --n 60 --p 10 --reps 10 --seed 5 --out " +
            (ws.dir / "out").string()) == 0);
  const std::string csv =
      slurp(only_file_matching(ws.dir / "out", "simulate_", ".csv"));
  CHECK(csv.find("test,rejection_rate,mc_sd") != std::string::npos);
  CHECK(csv.find("H,") != std::string::npos);
}

TEST_CASE("config file mirrors flags and flags take precedence") {
  Workspace ws;
  std::ofstream cfg(ws.dir / "cfg.ini");
  cfg << "[simulate]\n"
      << "n = 60\n"
      << "p = 10\n"
      << "reps = 10\n"
      << "seed = 5\n"
      << "out = " << (ws.dir / "out_cfg").string() << "\n";
  cfg.close();
  CHECK(run("--config " + (ws.dir / "cfg.ini").string() + " simulate") == 0);
  const std::string from_cfg =
      slurp(only_file_matching(ws.dir / "out_cfg", "simulate_", ".csv"));

  // same settings via flags produce the identical table
  CHECK(run("simulate --n 60 --p 10 --reps 10 --seed 5 --out " +
            (ws.dir / "out_flags").string()) == 0);
  const std::string from_flags =
      slurp(only_file_matching(ws.dir / "out_flags", "simulate_", ".csv"));
  CHECK(from_cfg == from_flags);

  // a flag overrides the config value
  CHECK(run("--config " + (ws.dir / "cfg.ini").string() +
            " simulate --seed 6 --out " + (ws.dir / "out_override").string()) ==
        0);
  const std::string overridden =
      slurp(only_file_matching(ws.dir / "out_override", "simulate_", ".csv"));
  CHECK(overridden != from_cfg);
}

TEST_CASE("theory subcommand, all experiments") {
  Workspace ws;
  const std::string out = " --out " + (ws.dir / "out").string();
  CHECK(run("theory --experiment rotation --p 24 --trials 200 --seed 1" + out) == 0);
  CHECK(run("theory --experiment categories --p 20 --q 0.4 --K 8 --trials 200 "
            "--seed 2" + out) == 0);
  CHECK(run("theory --experiment hermite --p 10000 --lambda-log" + out) == 0);
  CHECK(run("theory --experiment qf --n 200 --p 60 --reps 100 --law "
            "scaled-t8 --seed 3" + out) == 0);
  const std::string hermite_csv =
      slurp(only_file_matching(ws.dir / "out", "theory_hermite", ".csv"));
  CHECK(hermite_csv.find("experiment,p,parameters,estimate,bound,mc_sd") !=
        std::string::npos);
  CHECK(hermite_csv.find("hermite_tail") != std::string::npos);
}
