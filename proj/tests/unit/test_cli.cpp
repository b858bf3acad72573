#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"

using dosesens::cli::run;
using dosesens::cli::sha256_hex;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string kData = DOSESENS_DATA_DIR "/synthetic_design.csv";

}  // namespace

TEST_CASE("sha256 test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("usage errors") {
  CHECK(call({}).code == 2);
  CHECK(call({"frobnicate"}).code == 2);
  CHECK(call({"validate", "--input", kData, "--bogus"}).code == 2);
  const auto v = call({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find("dosesens") != std::string::npos);
}

TEST_CASE("bad input files") {
  CHECK(call({"validate", "--input", "/nonexistent/file.csv"}).code != 0);
  const auto path = std::filesystem::temp_directory_path() / "dosesens_bad_design.csv";
  std::ofstream(path) << "set_id,dose,outcome\na,0.5,1\n";
  const auto r = call({"validate", "--input", path.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("set size < 2") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("validate emits the envelope") {
  const auto r = call({"validate", "--input", kData});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"tool\": \"dosesens\"") != std::string::npos);
  CHECK(r.out.find("\"command\": \"validate\"") != std::string::npos);
  CHECK(r.out.find("\"design_sha256\"") != std::string::npos);
  CHECK(r.out.find("\"seed\"") != std::string::npos);
}

TEST_CASE("seeded reruns are identical") {
  const std::vector<std::string> args{"sharp-null", "--input", kData,    "--gamma", "0.5",
                                      "--stat",     "t",       "--method", "exact-mc", "--reps",
                                      "2000",       "--seed",  "7"};
  const auto a = call(args);
  REQUIRE(a.code == 0);
  CHECK(call(args).out == a.out);
  auto threaded = args;
  threaded.insert(threaded.end(), {"--threads", "3"});
  const auto t = call(threaded);
  REQUIRE(t.code == 0);
  // the result block does not depend on the worker count
  CHECK(t.out.substr(t.out.find("\"result\"")) == a.out.substr(a.out.find("\"result\"")));
}
