#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsmfg/coupling.hpp"

namespace qsmfg {

/// Invalid configuration; what() starts with the offending field name.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& field, const std::string& reason)
        : std::invalid_argument(field + ": " + reason), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct RunConfig {
    /// Model name plus its parameters, as given.
    std::string model_name = "example1";
    nlohmann::json model_params = nlohmann::json::object();
    Grid grid{1, 32};
    CouplingConfig coupling;
    HorizonMode mode = HorizonMode::discounted;
    InitialDensity m0 = InitialDensity::von_mises;
    double m0_concentration = 4.0;
    double m0_centre = 0.25;
    std::string output;
    bool kset = true;
    bool residual_history = false;
    bool binary = true;
    unsigned long long seed = 1;
    int validation_samples = 200;
    /// dotted key -> list of values, expanded as a Cartesian product
    nlohmann::json sweep = nlohmann::json::object();
};

/// Parses and validates; unknown keys are rejected. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

std::unique_ptr<Model> build_model(const RunConfig& config);
DensityField build_initial_density(const RunConfig& config);

enum ExitCode { exit_ok = 0, exit_config = 2, exit_not_converged = 3 };

struct RunResult {
    TrajectorySolution solution;
    nlohmann::json summary;
    ExitCode code = exit_ok;
};

/// Solves the configured problem. Writes its files when config.output is set.
RunResult execute(const RunConfig& config);

/// Cartesian product of config["sweep"], one config per point with the
/// "sweep" key removed; also returns the varied keys in order.
std::vector<nlohmann::json> expand_sweep(const nlohmann::json& config, std::vector<std::string>* keys = nullptr);

/// Model spot checks as JSON: one entry per check plus "passed".
nlohmann::json validation_summary(const RunConfig& config);

} // namespace qsmfg
