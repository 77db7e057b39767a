#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qsmfg/io.hpp"
#include "qsmfg/run.hpp"

using namespace qsmfg;
using nlohmann::json;

namespace {

std::string field_of(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return {};
}

json minimal() {
    return json::parse(R"({"model": {"name": "constant", "cost": 0.5}, "grid": {"n": 32},
                           "time": {"T": 0.5, "dt": 0.05}, "damping": 1.0})");
}

} // namespace

TEST_CASE("config errors name the field") {
    CHECK(field_of(minimal()).empty());
    json j = minimal();
    j["rho"] = 0.0;
    CHECK(field_of(j) == "rho");
    j = minimal();
    j["time"]["T"] = 0.33;
    CHECK(field_of(j) == "time.T");
    j = minimal();
    j["grid"]["dim"] = 3;
    CHECK(field_of(j) == "grid.dim");
    j = minimal();
    j["model"]["name"] = "nope";
    CHECK(field_of(j) == "model.name");
    j = minimal();
    j["model"]["colour"] = 1;
    CHECK(field_of(j) == "model.colour");
    j = minimal();
    j["tolerances"] = {{"outer", -1.0}};
    CHECK(field_of(j) == "tolerances.outer");
    j = minimal();
    j["damping"] = 0.0;
    CHECK(field_of(j) == "damping");
    j = minimal();
    j["strategy"] = "delta";
    CHECK(field_of(j) == "strategy");
    j = minimal();
    j["rho"] = "one";
    CHECK(field_of(j) == "rho");
    j = minimal();
    j["model"] = {{"name", "example2"}, {"kernel", {{"type", "constant"}}}};
    CHECK(field_of(j) == "strategy");
    j["strategy"] = "psi";
    CHECK(field_of(j).empty());
    j["model"]["kernel"]["type"] = "cubic";
    CHECK(field_of(j) == "model.kernel.type");
}

TEST_CASE("minimal decoupled run") {
    const RunResult r = execute(parse_config(minimal()));
    CHECK(r.code == exit_ok);
    CHECK(r.summary["converged"] == true);
    const int it = r.summary["outer_iterations"];
    CHECK((it == 1 || it == 2));
    CHECK(r.summary["kset"]["rho_u_max"].get<double>() <= r.summary["kset"]["cost_max"].get<double>() + 1e-9);
}

TEST_CASE("outputs are written and reproducible") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "qsmfg_test_run";
    fs::remove_all(dir);
    json j = json::parse(R"({"model": {"name": "example1", "epsilon": 0.3, "kappa": 0.5, "beta": 0.5, "potential": 0.6},
                             "grid": {"n": 16}, "time": {"T": 0.2, "dt": 0.05},
                             "diagnostics": {"residual_history": true}})");
    j["output"] = (dir / "a").string();
    const RunResult a = execute(parse_config(j));
    j["output"] = (dir / "b").string();
    j["threads"] = 3;
    const RunResult b = execute(parse_config(j));
    REQUIRE(a.code == exit_ok);
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    for (const char* name : {"u.csv", "m.csv", "mu.csv", "m.bin", "convergence.csv", "hjb_residuals.csv"}) {
        INFO(name);
        REQUIRE(fs::exists(dir / "a" / name));
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
    }
    std::ifstream bin(dir / "a" / "m.bin", std::ios::binary);
    const FpTrajectory back = read_fp_binary(bin);
    REQUIRE(back.densities.size() == a.solution.m.size());
    CHECK(back.densities.back()[3] == a.solution.m.back()[3]);
    const json summary = json::parse(std::ifstream(dir / "a" / "summary.json"));
    CHECK(summary["outer_iterations"] == a.summary["outer_iterations"]);
    fs::remove_all(dir);
}

TEST_CASE("sweep expansion") {
    json j = minimal();
    j["sweep"] = {{"rho", {0.5, 1.0, 2.0}}, {"model.cost", {0.1, 0.2}}};
    std::vector<std::string> keys;
    const auto pts = expand_sweep(j, &keys);
    CHECK(pts.size() == 6);
    CHECK(keys == std::vector<std::string>{"model.cost", "rho"});
    for (const auto& p : pts) {
        CHECK_FALSE(p.contains("sweep"));
        CHECK(field_of(p).empty());
    }
    CHECK(pts[5]["rho"] == 2.0);
    CHECK(pts[5]["model"]["cost"] == 0.2);
    j["sweep"] = {{"rho", json::array()}};
    CHECK_THROWS_AS(expand_sweep(j), ConfigError);
}

TEST_CASE("shipped configs parse") {
    for (const auto& e : std::filesystem::directory_iterator(QSMFG_CONFIG_DIR)) {
        INFO(e.path().string());
        std::ifstream f(e.path());
        const json j = json::parse(f);
        for (const auto& p : expand_sweep(j)) CHECK(field_of(p).empty());
    }
}

TEST_CASE("validation summary") {
    const json rep = validation_summary(parse_config(json::parse(R"({"model": {"name": "example1", "epsilon": 0.2}})")));
    CHECK(rep["passed"] == true);
    CHECK(rep["checks"].size() >= 4);
}
