#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "pspred_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(PSPRED_CLI) + " " + args + " > " + (kWork / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json small_config() {
  return {{"environment", {{"grid", {{"grid_l", 20}, {"grid_w", 20}, {"voxel_len_m", 10.0}}},
                           {"buildings", {{"count", 3}}}}},
          {"n_transmitters", 30},
          {"n_test", 6},
          {"tpn_sweep", {20}},
          {"k", 60},
          {"m", 20},
          {"boundary", {{"n_points", 10}}},
          {"optimizer", {{"epochs", 3}}},
          {"seeds", {3}}};
}

fs::path write_config(const std::string& name, const nlohmann::json& j) {
  const fs::path p = kWork / name;
  std::ofstream(p) << j.dump(1);
  return p;
}

}  // namespace

TEST_CASE("pipeline chain and exit codes") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::string cfg = "--config " + write_config("cfg.json", small_config()).string();
  const std::string out = "--out " + (kWork / "run").string();

  CHECK(run("--help") == 0);
  CHECK(run("") == 1);
  CHECK(run("--config /nonexistent.json gen") == 1);
  CHECK(run("--config " + write_config("bad.json", {{"bogus_key", 1}}).string() + " " + out + " gen") == 1);
  CHECK(run(cfg + " " + out + " fit-plm") == 2);

  REQUIRE(run(cfg + " " + out + " gen") == 0);
  CHECK(fs::exists(kWork / "run" / "environment.json"));
  REQUIRE(run(cfg + " " + out + " collect") == 0);
  REQUIRE(run(cfg + " " + out + " fit-plm") == 0);
  REQUIRE(run(cfg + " " + out + " rti") == 0);
  REQUIRE(run(cfg + " " + out + " train") == 0);
  REQUIRE(run(cfg + " " + out + " predict") == 0);
  const std::string preds = slurp(kWork / "run" / "predictions.csv");
  REQUIRE(preds.find('\n') != std::string::npos);

  // First test transmitter from the predictions file.
  std::istringstream lines(preds);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  std::istringstream cells(row);
  std::string x, y;
  std::getline(cells, x, ',');
  std::getline(cells, y, ',');
  const std::string tx = " --tx " + x + " " + y;
  CHECK(run(cfg + " " + out + " boundary --method plm" + tx) == 0);
  CHECK(fs::exists(kWork / "run" / "boundary.csv"));
  CHECK(run(cfg + " " + out + " boundary --tx 3 4") == 1);

  // A protection covering the whole area denies every request.
  auto guarded = small_config();
  guarded["protections"] = {{{"center", {100.0, 100.0}},
                             {"points", {{-1.0, -1.0}, {201.0, -1.0}, {201.0, 201.0}, {-1.0, 201.0}}}}};
  const std::string gcfg = "--config " + write_config("guarded.json", guarded).string();
  CHECK(run(gcfg + " " + out + " boundary --method plm" + tx) == 3);
}

TEST_CASE("eval is reproducible") {
  fs::create_directories(kWork);
  const std::string cfg = "--config " + write_config("eval.json", small_config()).string();
  REQUIRE(run(cfg + " --seed 7 --out " + (kWork / "e1").string() + " eval --quiet") == 0);
  REQUIRE(run(cfg + " --seed 7 --out " + (kWork / "e2").string() + " eval --quiet") == 0);
  for (const char* f : {"report.csv", "histogram.csv", "summary.txt"}) {
    CAPTURE(f);
    CHECK(fs::exists(kWork / "e1" / f));
    CHECK(slurp(kWork / "e1" / f) == slurp(kWork / "e2" / f));
  }
}
