#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "drcrt/report.hpp"

using namespace drcrt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

struct ScratchDir {
  fs::path dir = fs::temp_directory_path() / ("drcrt_cli_test_" + std::to_string(::getpid()));
  ScratchDir() { fs::create_directories(dir); }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

const fs::path& workdir() {
  static const ScratchDir scratch;
  return scratch.dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

// Runs the CLI with stdout captured; stderr goes to <workdir>/stderr.txt.
Run cli(const std::string& args) {
  const std::string cmd = std::string(DRCRT_CLI_PATH) + " " + args + " 2>" + path("stderr.txt");
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& file, const std::string& text) { std::ofstream(file) << text; }

const std::string& small_dataset() {
  static const std::string file = [] {
    const auto f = path("small.csv");
    const auto r = cli("simulate --scenario 1 --clusters 12 --seed 5 --output " + f);
    REQUIRE(r.code == 0);
    return f;
  }();
  return file;
}

std::string error_kind() {
  const auto j = nlohmann::json::parse(slurp(path("stderr.txt")));
  return j.at("error").get<std::string>();
}

}  // namespace

TEST_CASE("simulate is byte-for-byte reproducible") {
  REQUIRE(cli("simulate --scenario 1 --seed 42 --output " + path("a.csv")).code == 0);
  REQUIRE(cli("simulate --scenario 1 --seed 42 --output " + path("b.csv")).code == 0);
  REQUIRE(cli("simulate --scenario 1 --seed 43 --output " + path("c.csv")).code == 0);
  const auto a = slurp(path("a.csv"));
  CHECK(!a.empty());
  CHECK(a.rfind("cluster_id,time,event,arm,W1,W2,Z1,Z2\n", 0) == 0);
  CHECK(a == slurp(path("b.csv")));
  CHECK(a != slurp(path("c.csv")));
}

TEST_CASE("simulate from a saved scenario config") {
  REQUIRE(cli("simulate --scenario 3 --seed 1 --write-config " + path("s3.cfg") + " --output " + path("d.csv")).code == 0);
  REQUIRE(cli("simulate --config " + path("s3.cfg") + " --seed 1 --output " + path("e.csv")).code == 0);
  CHECK(slurp(path("d.csv")) == slurp(path("e.csv")));
}

TEST_CASE("fit writes a JSON report that parses back") {
  const auto r = cli("fit --data " + small_dataset() +
                     " --outcome \"W1 + W2 + Z1 + Z2 + Z1*Z2\" --times 0.5,1 --variance jackknife --format json --output " +
                     path("fit.json"));
  REQUIRE(r.code == 0);
  const auto stdout_report = EstimandReport::from_json(nlohmann::json::parse(r.out));
  const auto file_report = EstimandReport::from_json(nlohmann::json::parse(slurp(path("fit.json"))));
  CHECK(stdout_report == file_report);
  CHECK(file_report.clusters == 12);
  CHECK(file_report.df == 10);
  CHECK(file_report.censoring_formula == file_report.outcome_formula);
  REQUIRE(file_report.levels[0].rows.size() == 2);
  CHECK(file_report.levels[0].rows[0].effect.interval.has_value());
}

TEST_CASE("text report and default quartile times") {
  const auto r = cli("fit --data " + small_dataset() + " --method km");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Clusters (M):    12") != std::string::npos);
  CHECK(r.out.find("Cluster-level SPCE:") != std::string::npos);
  std::size_t rows = 0;
  for (std::size_t pos = 0; (pos = r.out.find("\nt=", pos)) != std::string::npos; ++pos) ++rows;
  CHECK(rows == 6);
}

TEST_CASE("variance none omits standard errors") {
  const auto r = cli("fit --data " + small_dataset() + " --method km --times 1 --format json");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"se\"") == std::string::npos);
  CHECK(r.out.find("\"lower\"") == std::string::npos);
}

TEST_CASE("RMST needs a horizon") {
  CHECK(cli("fit --data " + small_dataset() + " --estimand RMST").code == 2);
  CHECK(error_kind() == "InvalidConfig");
  const auto ok = cli("fit --data " + small_dataset() + " --method frailty --outcome \"Z1 + Z2\" --estimand RMST --tau 1 --scale ratio --format json");
  CHECK(ok.code == 0);
}

TEST_CASE("exit codes") {
  CHECK(cli("fit --data " + path("missing.csv")).code == 1);
  CHECK(error_kind() == "Io");
  CHECK(cli("fit --data " + small_dataset() + " --method magic").code == 2);
  CHECK(cli("fit --data " + small_dataset() + " --outcome \"Q9\"").code == 2);
  CHECK(error_kind() == "UnknownTerm");
  CHECK(cli("fit --data " + small_dataset() + " --pi 1.5").code == 2);
  CHECK(cli("fit --bogus-flag").code == 2);

  write(path("mixed.csv"), "cluster_id,time,event,arm\na,1,1,1\na,2,1,0\nb,1,1,0\n");
  CHECK(cli("fit --data " + path("mixed.csv")).code == 2);
  CHECK(error_kind() == "ArmVariesWithinCluster");

  // Z2 = 2 Z1 makes the information matrix singular.
  write(path("collinear.csv"),
        "cluster_id,time,event,arm,Z1,Z2\n"
        "a,1.0,1,1,0.3,0.6\na,2.0,0,1,0.1,0.2\na,0.5,1,1,0.7,1.4\n"
        "b,1.5,1,1,0.2,0.4\nb,2.5,1,1,0.9,1.8\n"
        "c,1.0,1,0,0.5,1.0\nc,2.0,0,0,0.4,0.8\nc,0.7,1,0,0.1,0.2\n");
  CHECK(cli("fit --data " + path("collinear.csv") + " --outcome \"Z1 + Z2\" --times 1").code == 3);
  CHECK(error_kind() == "SingularInformation");

  // Removing the only treated cluster leaves one arm.
  write(path("lonely.csv"),
        "cluster_id,time,event,arm\n"
        "a,1.0,1,1\na,2.0,0,1\n"
        "b,1.0,1,0\nb,2.0,0,0\n"
        "c,1.5,1,0\nc,0.5,0,0\n");
  CHECK(cli("fit --data " + path("lonely.csv") + " --method km --times 1 --variance jackknife").code == 4);
  CHECK(error_kind() == "LeaveOneOutInfeasible");
}

TEST_CASE("truth and a two-rep evaluation") {
  REQUIRE(cli("truth --scenario 1 --clusters 10000 --times 0.5,1 --tau 1 --output " + path("truth.json")).code == 0);
  const auto truth = nlohmann::json::parse(slurp(path("truth.json")));
  CHECK(truth["schema"] == "drcrt.truth");
  const auto r = cli("evaluate --scenario 1 --reps 2 --strategies KM --times 0.5,1 --truth " + path("truth.json") +
                     " --output " + path("study"));
  REQUIRE(r.code == 0);
  const auto csv = slurp(path("study.csv"));
  CHECK(csv.rfind("strategy,level,estimand,series,time,truth,mean,pbias,mcsd,aese,cp,reps\n", 0) == 0);
  CHECK(csv.find("KM,cluster,SPCE,difference,1,") != std::string::npos);
  CHECK(slurp(path("study.txt")).find("PBias") != std::string::npos);
}
