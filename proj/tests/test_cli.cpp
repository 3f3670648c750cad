#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "parabolax/pipelines.hpp"

using namespace parabolax;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json base_config() {
    return json{
        {"schema_version", 1},
        {"experiment", "simulate"},
        {"seed", 7},
        {"domain", {{"kind", "interval"}, {"a", 0.0}, {"b", 1.0}, {"bc", "dirichlet"}}},
        {"resolution", 32},
        {"field", {{"name", "heat"}}},
        {"solver", {{"scheme", "imex2"}, {"dt", 1e-3}, {"stride", 10}}},
        {"params", {{"initial", "sin(pi*x)"}, {"T", 0.05}}}};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("parabolax_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json load_report(const fs::path& dir) {
    std::ifstream in(dir / "report.json");
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config validation rejects bad input") {
    json j = base_config();
    j["solver"]["dt"] = -1.0;
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);

    j = base_config();
    j["experiment"] = "frobnicate";
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);

    j = base_config();
    j["domain"] = {{"kind", "circle"}, {"bc", "dirichlet"}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);

    j = base_config();
    j["thresholds"] = {{"tube_radius", 0.0}};
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);

    j = base_config();
    j.erase("field");
    CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
}

TEST_CASE("simulate pipeline writes trajectory artifacts") {
    TempDir tmp("simulate");
    RunConfig cfg = RunConfig::from_json(base_config());
    CHECK(run(cfg, tmp.path.string()) == 0);

    json rep = load_report(tmp.path);
    CHECK(rep.at("status") == "ok");
    CHECK(rep.at("experiment") == "simulate");
    CHECK(rep.contains("config"));
    CHECK(rep.at("results").at("final_norm").get<double>() > 0.0);
    CHECK(fs::exists(tmp.path / "data" / "trajectory.csv"));
    CHECK(fs::exists(tmp.path / "data" / "grid_nodes.csv"));
    CHECK(fs::exists(tmp.path / "plotdata" / "norms.csv"));

    std::ifstream csv(tmp.path / "data" / "trajectory.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("t,u0,u1", 0) == 0);
}

TEST_CASE("spectrum pipeline reports the morse index") {
    TempDir tmp("spectrum");
    json j = base_config();
    j["experiment"] = "spectrum";
    j["resolution"] = 64;
    j["field"] = {{"name", "chafee_infante"}, {"lambda", 15.0}};
    j["params"] = {{"guess", "0"}, {"top_k", 5}};
    RunConfig cfg = RunConfig::from_json(j);
    CHECK(run(cfg, tmp.path.string()) == 0);
    json rep = load_report(tmp.path);
    CHECK(rep.at("results").at("spectrum").at("morse_index") == 1);
    auto flags = rep.at("results").at("spectrum").at("flags");
    CHECK(std::find(flags.begin(), flags.end(), "hyperbolic") != flags.end());
}

TEST_CASE("blow-up is reported with exit status 2") {
    TempDir tmp("blowup");
    json j = base_config();
    j["field"] = {{"name", "polynomial"}, {"expr", "u^2"}};
    j["domain"] = {{"kind", "interval"}, {"a", 0.0}, {"b", 1.0}, {"bc", "neumann"}};
    j["solver"] = {{"dt", 1e-4}};
    j["params"] = {{"initial", "10"}, {"T", 0.2}};
    RunConfig cfg = RunConfig::from_json(j);
    CHECK(run(cfg, tmp.path.string()) == 2);
    json rep = load_report(tmp.path);
    CHECK(rep.at("status") == "error");
    CHECK(rep.at("error").at("kind") == "blow_up");
    CHECK(rep.at("error").at("t_star").get<double>() < 0.12);
}

TEST_CASE("reruns with the same seed are byte-identical modulo timestamp") {
    TempDir a("det_a"), b("det_b");
    json j = base_config();
    j["experiment"] = "observe";
    j["resolution"] = 32;
    j["field"] = {{"name", "chafee_infante"}, {"lambda", 15.0}};
    j["solver"] = {{"dt", 1e-3}};
    j["params"] = {{"mode", "injectivity"},
                   {"initial", "0.5*sin(pi*x)"},
                   {"T", 0.3},
                   {"probes", 6},
                   {"time_samples", 65}};
    j["seed"] = 12345;
    RunConfig cfg = RunConfig::from_json(j);
    CHECK(run(cfg, a.path.string()) == 0);
    CHECK(run(cfg, b.path.string()) == 0);

    json ra = load_report(a.path);
    json rb = load_report(b.path);
    ra.erase("timestamp");
    rb.erase("timestamp");
    CHECK(ra.dump() == rb.dump());
    CHECK(file_bytes(a.path / "data" / "grid_nodes.csv") ==
          file_bytes(b.path / "data" / "grid_nodes.csv"));
}

TEST_CASE("derivative-check pipeline emits the cross-check scalars") {
    TempDir tmp("derivcheck");
    json j = base_config();
    j["experiment"] = "derivative-check";
    j["resolution"] = 48;
    j["field"] = {{"name", "chafee_infante"}, {"lambda", 15.0}};
    j["solver"] = {{"dt", 5e-4}};
    j["params"] = {{"initial", "0.5*sin(pi*x)"}, {"m", 0.3}, {"eps", 1e-4}};
    RunConfig cfg = RunConfig::from_json(j);
    CHECK(run(cfg, tmp.path.string()) == 0);
    json rep = load_report(tmp.path);
    CHECK(rep.at("results").at("fd_relative_error").get<double>() < 1e-3);
    CHECK(rep.at("results").at("duality_mismatch").get<double>() < 1e-8);
}
