#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "parabolax/pipelines.hpp"

int main(int argc, char** argv) {
    CLI::App app{"parabolax: a numerical laboratory for scalar "
                 "reaction-diffusion dynamics"};
    std::string experiment;
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int resolution = 0;
    double dt = 0.0;

    app.add_option("experiment", experiment,
                   "simulate|equilibria|spectrum|orbit|connect|transversality|"
                   "nodal|observe|perturb|derivative-check")
        ->required();
    app.add_option("--config", config_path, "run configuration file (JSON)")
        ->required();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--resolution", resolution, "override the per-axis resolution");
    app.add_option("--dt", dt, "override the solver step size");
    CLI11_PARSE(app, argc, argv);

    const char* verbosity = std::getenv("PARABOLAX_LOG");
    const bool quiet = verbosity != nullptr && std::string(verbosity) == "quiet";

    try {
        nlohmann::json j;
        {
            std::ifstream in(config_path);
            if (!in.good()) throw parabolax::ConfigError("cannot open config file");
            in >> j;
        }
        if (seed_set) j["seed"] = seed;
        if (resolution > 0) j["resolution"] = resolution;
        if (dt != 0.0) j["solver"]["dt"] = dt;
        parabolax::RunConfig cfg = parabolax::RunConfig::from_json(j);
        if (cfg.experiment != experiment)
            throw parabolax::ConfigError(
                "config experiment '" + cfg.experiment +
                "' does not match the requested '" + experiment + "'");
        const int status = parabolax::run(cfg, out_dir);
        if (!quiet)
            std::cerr << "parabolax: " << experiment << " -> " << out_dir
                      << "/report.json (status " << status << ")\n";
        return status;
    } catch (const parabolax::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
