#include "mfbsde/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace mfbsde;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("mfbsde_cli_" + std::to_string(std::random_device{}()));
  TempDir() { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int call(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  return code;
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

json read_json(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

}  // namespace

TEST_CASE("constants subcommand reports the global constants") {
  std::string out;
  REQUIRE(call({"constants", "--fixture", "eq41"}, &out) == cli::exit_ok);
  const json j = json::parse(out);
  for (const char* key : {"C_tilde", "eta_0", "kappa", "delta_kappa"}) CHECK(j["constants"]["global"].contains(key));
  CHECK(j["schema_version"] == 1);
}

TEST_CASE("solve reproduces the Cole-Hopf value") {
  TempDir t;
  REQUIRE(call({"solve", "--scheme", "theta", "--fixture", "pure_quadratic", "--report", t.file("r.json"), "--csv",
                t.file("s.csv"), "--dump", t.file("d.bin")}) == cli::exit_ok);
  const json j = read_json(t.file("r.json"));
  CHECK(std::abs(j["result"]["Y0"][0].get<double>() - 0.5) <= 0.01);
  CHECK(j["status"] == "converged");
  std::ifstream csv(t.file("s.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header == "t,mean_abs_Y_1,max_abs_Y,bmo");
  CHECK(fs::file_size(t.file("d.bin")) > 0);
}

TEST_CASE("malformed configurations exit 2 and write nothing") {
  TempDir t;
  const std::string report = t.file("r.json");
  const std::vector<std::string> bad{
      R"({"fixture": "pure_quadratic", "grid": {"T": 1, "steps": 4}, "output": {"report": ")" + report + R"("}})",
      R"({"fixture": {"name": "pure_quadratic", "params": {"gama": 1}}, "output": {"report": ")" + report + R"("}})",
      R"({"fixture": "pure_quadratic", "scheme": "local", "output": {"report": ")" + report + R"("}})",
      R"({"fixture": "pure_quadratic", "solver": {"theta": 2}, "output": {"report": ")" + report + R"("}})",
      R"({"fixture": "pure_quadratic", "ensemble": {"N": -3}})",
      R"({"fixture": "pure_quadratic", "extra": 1})",
      R"(not json)"};
  for (const auto& text : bad) {
    CAPTURE(text);
    write(t.file("c.json"), text);
    CHECK(call({"solve", "--config", t.file("c.json")}) == cli::exit_schema);
    CHECK_FALSE(fs::exists(report));
  }
  CHECK(call({"solve", "--config", t.file("missing.json")}) == cli::exit_schema);
  CHECK(call({"frobnicate"}) == cli::exit_schema);
}

TEST_CASE("a config file drives the run and is echoed") {
  TempDir t;
  write(t.file("c.json"), R"({"fixture": {"name": "linear_mf", "params": {"c": 2}},
    "grid": {"T": 0.5, "M": 16}, "ensemble": {"N": 2048, "seed": 3},
    "basis": {"kind": "polynomial", "degree": 2}, "solver": {"tol": 1e-7, "z_clip": "inf"}})");
  REQUIRE(call({"solve", "--config", t.file("c.json"), "--report", t.file("r.json")}) == cli::exit_ok);
  const json j = read_json(t.file("r.json"));
  CHECK(j["config"]["grid"]["M"] == 16);
  CHECK(j["config"]["ensemble"]["seed"] == 3);
  CHECK(j["config"]["solver"]["z_clip"] == "inf");
  CHECK(std::abs(j["result"]["Y0"][0].get<double>() - 2.0 * std::exp(0.5)) <= 0.01 * 2.0 * std::exp(0.5));
  // Feeding the echo back reproduces the run.
  json echo = j["config"];
  echo["output"] = {{"report", t.file("r2.json")}};
  write(t.file("c2.json"), echo.dump());
  REQUIRE(call({"solve", "--config", t.file("c2.json")}) == cli::exit_ok);
  CHECK(read_json(t.file("r2.json"))["result"] == j["result"]);
}

TEST_CASE("divergence exits 3 with the trace on disk") {
  TempDir t;
  REQUIRE(call({"solve", "--fixture", "bounded_sine_mf", "--N", "1024", "--M", "8", "--report", t.file("r.json"),
                "--params", "{}"}) == cli::exit_ok);
  write(t.file("c.json"), R"({"fixture": "bounded_sine_mf", "ensemble": {"N": 1024}, "grid": {"M": 8},
    "solver": {"max_iter": 1}})");
  CHECK(call({"solve", "--config", t.file("c.json"), "--report", t.file("d.json")}) == cli::exit_divergence);
  const json j = read_json(t.file("d.json"));
  CHECK(j["status"] == "diverged");
  CHECK(j["trace"]["iterations"] == 1);
}

TEST_CASE("verify passes for pure_quadratic and keeps its pass pattern across seeds") {
  TempDir t;
  CHECK(call({"verify", "--fixture", "pure_quadratic", "--report", t.file("a.json")}) == cli::exit_ok);
  CHECK(call({"verify", "--fixture", "pure_quadratic", "--seed", "8", "--report", t.file("b.json")}) ==
        cli::exit_ok);
  const json a = read_json(t.file("a.json")), b = read_json(t.file("b.json"));
  REQUIRE(a["checks"].size() == b["checks"].size());
  bool digits_differ = false;
  for (std::size_t i = 0; i < a["checks"].size(); ++i) {
    // bmo(Z) sits at 1 for this problem, so John-Nirenberg may be skipped on one seed only.
    CHECK((a["checks"][i]["status"] == "fail") == (b["checks"][i]["status"] == "fail"));
    digits_differ = digits_differ || a["checks"][i]["observed"] != b["checks"][i]["observed"];
  }
  CHECK(digits_differ);
}

TEST_CASE("verify exits 4 on an oracle mismatch") {
  // Sixteen particles on two steps miss the Cole-Hopf value by far more than 2%.
  TempDir t;
  const int code = call({"verify", "--fixture", "pure_quadratic", "--N", "16", "--M", "2", "--report", t.file("v.json")});
  CHECK(code == cli::exit_mismatch);
}

TEST_CASE("refine reports every level") {
  std::string out;
  REQUIRE(call({"refine", "--fixture", "pure_quadratic", "--N", "2048", "--M", "8"}, &out) == cli::exit_ok);
  const json j = json::parse(out);
  REQUIRE(j["levels"].size() == 3);
  CHECK(j["levels"][2]["M"] == 32);
  CHECK(j["reference"].get<double>() == doctest::Approx(0.5));
}
