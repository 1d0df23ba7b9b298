#include <array>
#include <cstdio>
#include <filesystem>
#include <sys/wait.h>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace phaze::testing;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PHAZE_BIN) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string scratch(const std::string& name) {
  const std::string dir = std::string(PHAZE_SCRATCH_DIR) + "/cli";
  std::filesystem::create_directories(dir);
  return dir + "/" + name;
}

const char* kSmallSpace = R"({
  "archspace": {"num_tc": [1, 2], "num_vc": [2, 4], "pe_x": [16], "pe_y": [16], "glb_bytes": [4194304]},
  "accelerator": {"num_tc": 2, "num_vc": 2, "pe_x": 16, "pe_y": 16, "glb_bytes": 4194304}
})";

std::string tiny_workload() {
  const std::string path = scratch("tiny.json");
  const Run r = run("gen-workload --out " + path +
                    " --name tiny --layers 3 --hidden 64 --heads 4 --seq 16 --tmp 1,2 --mb 1,2 --B 4 --K 4"
                    " --bandwidth 100 --hbm 1000000000");
  REQUIRE(r.code == 0);
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("configs lists the default space from the reference down") {
    const Run r = run("configs");
    REQUIRE(r.code == 0);
    const std::string header = r.out.substr(0, r.out.find('\n'));
    CHECK(header == "num_tc,num_vc,pe_x,pe_y,pe_vc,glb_bytes,glb_bw_words,l2_tc_bytes,l2_vc_bytes,area");
    const std::size_t second = r.out.find('\n') + 1;
    CHECK(r.out.substr(second, r.out.find('\n', second) - second) ==
          "8,2,128,128,128,134217728,1024,262144,2048,397448");
  }

  TEST_CASE("gen-workload writes a parseable file") {
    const std::string path = tiny_workload();
    const auto j = nlohmann::json::parse(read_file(path));
    CHECK(j["layers"].size() == 3);
    CHECK(j["training"]["K"] == 4);
  }

  TEST_CASE("place prints a solution and an explanation") {
    const std::string wl = tiny_workload();
    const std::string cfg = scratch("small.json");
    write_text(cfg, kSmallSpace);
    const Run json = run("place --workload " + wl + " --config " + cfg);
    REQUIRE(json.code == 0);
    const auto j = nlohmann::json::parse(json.out);
    CHECK(j["F"].get<long long>() > 0);
    CHECK(j["stages"].size() == j["s"].get<std::size_t>());
    const Run text = run("place --workload " + wl + " --config " + cfg + " --explain --recompute off");
    REQUIRE(text.code == 0);
    CHECK(text.out.find("placement: t=") == 0);
    CHECK(run("place --workload " + wl + " --recompute sometimes").code != 0);
  }

  TEST_CASE("ilp exports a model the reader accepts") {
    const std::string wl = tiny_workload();
    const std::string lp = scratch("layer.lp");
    const Run r = run("ilp --workload " + wl + " --layer 1 --pass bw --export-lp " + lp);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["pass"] == "bw");
    CHECK(j["makespan"].get<long long>() > 0);
    const LpModel m = read_lp(read_file(lp));
    CHECK(m.objective_var == "T");
    CHECK(m.rows.size() > 10);
    CHECK(run("ilp --workload " + wl + " --layer nope").code == 1);
  }

  TEST_CASE("search writes reports and exits zero") {
    const std::string wl = tiny_workload();
    const std::string cfg = scratch("small.json");
    write_text(cfg, kSmallSpace);
    const std::string out = scratch("search");
    std::filesystem::remove_all(out);
    const Run r = run("search --workloads " + wl + " --config " + cfg + " --out " + out + " --workers 1");
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(out + "/report.json"));
    CHECK(std::filesystem::exists(out + "/trace.csv"));
    CHECK(r.out.find("best common configuration") != std::string::npos);
  }

  TEST_CASE("search exits two when nothing fits") {
    const std::string path = scratch("huge.json");
    REQUIRE(run("gen-workload --out " + path +
                " --layers 2 --hidden 64 --heads 4 --seq 16 --tmp 1 --mb 1 --B 1 --K 1 --hbm 10")
                .code == 0);
    const std::string cfg = scratch("small.json");
    write_text(cfg, kSmallSpace);
    CHECK(run("search --workloads " + path + " --config " + cfg + " --out " + scratch("search2")).code == 2);
  }

  TEST_CASE("place matches the golden files") {
    const std::string src = PHAZE_SOURCE_DIR;
    const std::string args =
        "place --workload " + src + "/data/workloads/tiny.json --config " + src + "/data/engine_small.json";
    const Run json = run(args);
    REQUIRE(json.code == 0);
    CHECK(json.out == read_file(src + "/tests/golden/place_tiny.json"));
    const Run text = run(args + " --explain --recompute on");
    REQUIRE(text.code == 0);
    CHECK(text.out == read_file(src + "/tests/golden/place_tiny_recompute.txt"));
  }

  TEST_CASE("bad input exits one") {
    CHECK(run("place --workload /nonexistent.json").code == 1);
    CHECK(run("frobnicate").code != 0);
  }
}
