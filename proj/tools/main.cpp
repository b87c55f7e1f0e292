// Command-line front end: simulate, converge, verify, print-schema.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mfl/config.hpp"
#include "mfl/error.hpp"
#include "mfl/harness.hpp"

namespace {

enum Exit { Ok = 0, ConfigError = 2, Collision = 3, Invariant = 4 };

int classify(const mfl::Error& e)
{
    switch (e.code()) {
    case mfl::ErrorCode::ConfigInvalid:
    case mfl::ErrorCode::InvalidBeta:
    case mfl::ErrorCode::UnsupportedDimension:
    case mfl::ErrorCode::UnsupportedDensity:
    case mfl::ErrorCode::InvalidDimension:
        return ConfigError;
    case mfl::ErrorCode::CollisionDetected:
        return Collision;
    default:
        return Invariant;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Particle mean-field experiments with desk-scale diagnostics"};
    app.set_version_flag("--version", mfl::versionString());
    app.require_subcommand(1);

    std::string configPath, outDir, bundle;
    bool allowLarge = false;

    auto* sim = app.add_subcommand("simulate", "run the particle experiment and write a bundle");
    sim->add_option("config", configPath, "config file")->required()->check(CLI::ExistingFile);
    sim->add_option("-o,--output", outDir, "output directory (overrides run.output)");
    sim->add_flag("--allow-large", allowLarge, "lift the N <= 4096 ceiling");

    auto* conv = app.add_subcommand("converge", "1D convergence study against the grid solver");
    conv->add_option("config", configPath, "config file")->required()->check(CLI::ExistingFile);
    conv->add_option("-o,--output", outDir, "output directory (overrides run.output)");
    conv->add_flag("--allow-large", allowLarge, "lift the N <= 4096 ceiling");

    auto* ver = app.add_subcommand("verify", "re-check the invariants recorded in a bundle");
    ver->add_option("bundle", bundle, "bundle directory")->required()->check(CLI::ExistingDirectory);

    app.add_subcommand("print-schema", "print every config key with its default");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("print-schema")) {
            std::cout << mfl::configSchema();
            return Ok;
        }
        if (app.got_subcommand("verify")) {
            auto rep = mfl::verifyBundle(bundle);
            for (const auto& v : rep.violations)
                std::cout << "violation: " << v << "\n";
            std::cout << rep.checked << " records checked, " << rep.violations.size() << " violations\n";
            return rep.ok() ? Ok : Invariant;
        }

        mfl::ExperimentConfig cfg;
        try {
            cfg = mfl::configFromFile(configPath);
            if (!outDir.empty())
                cfg.output = outDir;
            if (allowLarge)
                cfg.allowLarge = true;
            cfg.validate();
        } catch (const mfl::Error& e) {
            std::cerr << e.what() << "\n";
            return ConfigError;
        }

        if (app.got_subcommand("simulate")) {
            auto res = mfl::runExperiment(cfg);
            for (const auto& r : res.runs) {
                std::cout << "N=" << r.N << " eps=" << r.eps << " T_obs=" << r.Tobs;
                if (r.gate)
                    std::cout << " gate violated at t=" << r.gate->time << " (" << r.gate->inequality << ")";
                if (r.traj.collision)
                    std::cout << " collision at t=" << r.traj.collision->time << " between " << r.traj.collision->i
                              << " and " << r.traj.collision->j;
                std::cout << "\n";
            }
            std::cout << "bundle written to " << cfg.output << "\n";
            for (const auto& v : res.invariantViolations)
                std::cerr << "invariant: " << v << "\n";
            if (res.collision)
                return Collision;
            return res.invariantViolations.empty() ? Ok : Invariant;
        }

        auto res = mfl::convergenceStudy(cfg);
        for (const auto& row : res.rows)
            std::cout << "N=" << row.N << " t=" << row.t << " weak=" << row.weak
                      << (row.weakControl >= 0 ? " control=" + std::to_string(row.weakControl) : std::string())
                      << "\n";
        for (std::size_t i = 0; i < cfg.N.size(); ++i)
            std::cout << "N=" << cfg.N[i] << " fconv=" << res.fconvByN[i] << "\n";
        std::cout << "oracle max mass drift " << res.oracleMaxMassDrift << "\n";
        std::cout << "written to " << cfg.output << "\n";
        return Ok;
    } catch (const mfl::CollisionError& e) {
        std::cerr << "collision: " << e.what() << "\n";
        return Collision;
    } catch (const mfl::Error& e) {
        std::cerr << mfl::errorCodeName(e.code()) << ": " << e.what() << "\n";
        return classify(e);
    }
}
