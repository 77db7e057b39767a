#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qsmfg/run.hpp"

using namespace qsmfg;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
}

void apply_overrides(json& j, const std::string& output, int threads) {
    if (!output.empty()) j["output"] = output;
    if (threads > 0) j["threads"] = threads;
}

int cmd_run(const std::string& path, const std::string& output, int threads, bool quiet) {
    json j = read_json(path);
    if (j.contains("sweep")) throw ConfigError("sweep", "use the sweep subcommand");
    apply_overrides(j, output, threads);
    const RunConfig cfg = parse_config(j);
    const RunResult r = execute(cfg);
    if (!quiet) std::cout << r.summary.dump(2) << '\n';
    if (r.code == exit_not_converged) std::cerr << "not converged; logs written\n";
    return r.code;
}

int cmd_validate(const std::string& path) {
    const RunConfig cfg = load_config(path);
    const json rep = validation_summary(cfg);
    std::cout << rep.dump(2) << '\n';
    return exit_ok;
}

/// JSON numbers print in shortest round-trip form.
std::string cell(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

int cmd_sweep(const std::string& path, const std::string& output, int threads) {
    json base = read_json(path);
    apply_overrides(base, "", threads);
    std::vector<std::string> keys;
    const auto points = expand_sweep(base, &keys);
    std::vector<RunConfig> configs;
    for (const auto& p : points) configs.push_back(parse_config(p));  // reject bad points before any solve

    std::ofstream file;
    if (!output.empty()) {
        std::filesystem::create_directories(output);
        file.open(std::filesystem::path(output) / "sweep.csv");
    }
    std::ostream& os = output.empty() ? std::cout : file;
    const std::vector<std::string> cols = {"converged", "outer_iterations", "final_outer_error", "worst_mu_residual",
                                           "worst_hjb_residual", "contraction_ratio", "damped_inner"};
    for (const auto& k : keys) os << k << ',';
    for (std::size_t i = 0; i < cols.size(); ++i) os << cols[i] << (i + 1 < cols.size() ? ',' : '\n');

    int code = exit_ok;
    for (std::size_t i = 0; i < points.size(); ++i) {
        RunConfig cfg = configs[i];
        cfg.output.clear();
        const RunResult r = execute(cfg);
        if (r.code != exit_ok) code = r.code;
        for (const auto& k : keys) {
            std::string ptr = "/" + k;
            std::replace(ptr.begin(), ptr.end(), '.', '/');
            os << cell(points[i].at(json::json_pointer(ptr))) << ',';
        }
        for (std::size_t c = 0; c < cols.size(); ++c) os << cell(r.summary.at(cols[c])) << (c + 1 < cols.size() ? ',' : '\n');
        os.flush();
    }
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasi-stationary mean field game solver"};
    app.require_subcommand(1);
    std::string path;
    std::string output;
    int threads = 0;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "solve the configured problem");
    run->add_option("config", path, "JSON config")->required();
    run->add_option("-o,--output", output, "output directory (overrides the config)");
    run->add_option("-j,--threads", threads, "worker threads (overrides the config)");
    run->add_flag("-q,--quiet", quiet, "do not print the summary");

    auto* validate = app.add_subcommand("validate", "model spot checks without solving");
    validate->add_option("config", path, "JSON config")->required();

    auto* sweep = app.add_subcommand("sweep", "Cartesian parameter sweep");
    sweep->add_option("config", path, "JSON config with a 'sweep' object")->required();
    sweep->add_option("-o,--output", output, "directory for sweep.csv (stdout when omitted)");
    sweep->add_option("-j,--threads", threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    try {
        if (*run) return cmd_run(path, output, threads, quiet);
        if (*validate) return cmd_validate(path);
        return cmd_sweep(path, output, threads);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
