// driftlab: simulate one-dimensional diffusions and jump-diffusions, build
// marginal surfaces, evaluate drift-measure functionals, and run the
// verification experiment suites.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "driftlab/io.hpp"
#include "driftlab/marginals.hpp"
#include "driftlab/measures.hpp"
#include "driftlab/reference_models.hpp"
#include "driftlab/verify.hpp"

namespace {

using driftlab::RunConfig;
using nlohmann::json;

void load_config_file(const std::string& path, RunConfig& cfg) {
    json j = json::parse(driftlab::read_file(path));
    if (j.contains("model")) cfg.model = j["model"].get<std::string>();
    if (j.contains("n_paths")) cfg.n_paths = j["n_paths"].get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("steps")) cfg.steps = j["steps"].get<std::size_t>();
    if (j.contains("horizon")) cfg.horizon = j["horizon"].get<double>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("tolerance_overrides"))
        for (auto& [k, v] : j["tolerance_overrides"].items())
            cfg.tolerance_overrides[k] = v.get<double>();
}

std::string resolve_out(const std::string& dir) {
    if (dir.empty()) return dir;
    const char* root = std::getenv("DRIFTLAB_OUT_ROOT");
    if (root && *root && !std::filesystem::path(dir).is_absolute())
        return std::string(root) + "/" + dir;
    return dir;
}

int print_report(const driftlab::ExperimentReport& rep) {
    for (const auto& c : rep.checks)
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << rep.experiment << ": " << c.name
                  << "  statistic=" << c.statistic << " tolerance=" << c.tolerance
                  << (c.se > 0 ? " se=" + std::to_string(c.se) : "") << "\n";
    std::cout << rep.experiment << ": " << (rep.all_pass() ? "PASS" : "FAIL") << " ("
              << rep.runtime_seconds << " s)\n";
    return rep.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for drift measures of one-dimensional processes"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--model", cfg.model, "model name");
        sub->add_option("--paths", cfg.n_paths, "number of Monte Carlo paths");
        sub->add_option("--seed", cfg.seed, "random seed");
        sub->add_option("--steps", cfg.steps, "partition steps");
        sub->add_option("--horizon", cfg.horizon, "time horizon");
        sub->add_option("--out", cfg.out_dir, "output directory");
    };

    auto* sim = app.add_subcommand("simulate", "simulate a path ensemble");
    bool sim_csv = false;
    add_common(sim);
    sim->add_flag("--csv", sim_csv, "also write a CSV dump");

    auto* surf = app.add_subcommand("surface", "estimate the call surface of an ensemble");
    bool surf_pde = false;
    add_common(surf);
    surf->add_flag("--pde", surf_pde, "solve the forward PDE instead of Monte Carlo");

    auto* meas = app.add_subcommand("measure", "evaluate the drift functionals on a reference "
                                               "test pair and emit a JSON record");
    add_common(meas);

    auto* ver = app.add_subcommand("verify", "run verification suites");
    std::string suite = "all";
    add_common(ver);
    ver->add_option("--suite", suite, "suite name or 'all'");

    auto* repc = app.add_subcommand("report", "aggregate suite reports in a directory");
    std::string report_dir;
    repc->add_option("--dir", report_dir, "directory holding suite JSON reports")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) {
            RunConfig from_file;
            load_config_file(config_path, from_file);
            // file first, explicit flags already in cfg win where set; simplest
            // deterministic rule: file fills only fields left at defaults
            RunConfig defaults;
            if (cfg.model == defaults.model) cfg.model = from_file.model;
            if (cfg.n_paths == defaults.n_paths) cfg.n_paths = from_file.n_paths;
            if (cfg.seed == defaults.seed) cfg.seed = from_file.seed;
            if (cfg.steps == defaults.steps) cfg.steps = from_file.steps;
            if (cfg.horizon == defaults.horizon) cfg.horizon = from_file.horizon;
            if (cfg.out_dir.empty()) cfg.out_dir = from_file.out_dir;
            for (auto& [k, v] : from_file.tolerance_overrides)
                cfg.tolerance_overrides.emplace(k, v);
        }
        cfg.out_dir = resolve_out(cfg.out_dir);
        if (cfg.n_paths < 1) throw std::invalid_argument("--paths must be at least 1");
        if (cfg.steps < 1) throw std::invalid_argument("--steps must be at least 1");
        if (!(cfg.horizon > 0.0)) throw std::invalid_argument("--horizon must be positive");

        if (sim->parsed()) {
            auto model = driftlab::models::by_name(cfg.model);
            auto part = driftlab::Partition::uniform(cfg.horizon, cfg.steps);
            auto e = driftlab::simulate(model, part, cfg.n_paths, cfg.seed);
            const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
            std::filesystem::create_directories(dir);
            const std::string base = dir + "/" + cfg.model + "_" + cfg.hash();
            driftlab::write_ensemble_binary(e, base + ".ens");
            if (sim_csv) driftlab::write_ensemble_csv(e, base + ".csv");
            std::cout << "wrote " << base << ".ens (" << e.n_paths << " paths, "
                      << part.steps() << " steps)\n";
            return 0;
        }

        if (surf->parsed()) {
            auto model = driftlab::models::by_name(cfg.model);
            const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
            std::filesystem::create_directories(dir);
            const std::string base = dir + "/" + cfg.model + "_surface_" + cfg.hash();
            driftlab::CallSurface cs;
            if (surf_pde) {
                cs = driftlab::call_surface_forward_pde(
                    model, [](double x) { return std::max(-x, 0.0); },
                    {-8.0, 8.0, 321, cfg.horizon, 512});
            } else {
                auto part = driftlab::Partition::uniform(cfg.horizon, cfg.steps);
                auto e = driftlab::simulate(model, part, cfg.n_paths, cfg.seed);
                std::vector<double> x_nodes, t_nodes;
                for (int j = -16; j <= 16; ++j) x_nodes.push_back(0.25 * j);
                for (int i = 1; i <= 16; ++i)
                    t_nodes.push_back(cfg.horizon * static_cast<double>(i) / 16.0);
                cs = driftlab::estimate_call_surface(e, x_nodes, t_nodes);
            }
            driftlab::write_grid_csv(cs.surface, base + ".csv");
            driftlab::write_grid_binary(cs.surface, base + ".grid");
            driftlab::DensitySlice d = driftlab::density(cs, cfg.horizon);
            driftlab::write_density_csv(d, cs.surface.x_nodes(), base + "_density.csv");
            std::cout << "wrote " << base << ".csv (projection distance "
                      << cs.projection_distance << ")\n";
            return 0;
        }

        if (meas->parsed()) {
            auto model = driftlab::models::by_name(cfg.model);
            auto part = driftlab::Partition::uniform(cfg.horizon, cfg.steps);
            auto e = driftlab::simulate(model, part, cfg.n_paths, cfg.seed);

            auto theta = driftlab::make_box_theta(0.25 * cfg.horizon, 0.75 * cfg.horizon, -2.5,
                                                  2.5, cfg.horizon / 32.0, 1.5);
            std::vector<double> xn, tn;
            for (double x = -4.0; x <= 4.0 + 1e-12; x += 1.0 / 16.0) xn.push_back(x);
            for (double t = 0.0; t <= cfg.horizon + 1e-12; t += cfg.horizon / 32.0)
                tn.push_back(t);
            auto f = driftlab::GridFunction::from_samples(tn, xn, [](double t, double x) {
                const double u = x / 2.0;
                if (u <= -1.0 || u >= 1.0) return 0.0;
                const double w = 1.0 - u * u;
                return (1.0 + t * (1.0 - t)) * w * w * w;
            });
            auto cs = driftlab::estimate_call_surface(e, xn, tn);
            auto mu = driftlab::reconstructed_drift(f, theta, cs.surface, e, model);
            auto mu_x = driftlab::drift_functional(
                e, model, [&](double t, double x) { return theta.fn().eval(t, x); });

            json j;
            j["schema_version"] = 1;
            j["config_hash"] = cfg.hash();
            j["model"] = cfg.model;
            j["partition_mesh"] = part.mesh();
            j["grid_mesh_t"] = cfg.horizon / 32.0;
            j["grid_mesh_x"] = 1.0 / 16.0;
            {
                std::string fd, td;
                for (std::size_t i = 0; i < f.n_rows(); ++i)
                    for (std::size_t jj = 0; jj < f.n_cols(); ++jj)
                        fd += std::to_string(f.at(i, jj)) + ",";
                for (std::size_t i = 0; i < theta.fn().n_rows(); ++i)
                    for (std::size_t jj = 0; jj < theta.fn().n_cols(); ++jj)
                        td += std::to_string(theta.fn().at(i, jj)) + ",";
                j["f_hash"] = driftlab::fnv1a_hex(fd);
                j["theta_hash"] = driftlab::fnv1a_hex(td);
            }
            j["drift_functional"] = {{"mean", mu_x.mean}, {"se", mu_x.se}};
            j["reconstructed_drift"] = {{"total", mu.total},
                                        {"bilinear_term", mu.bilinear_term},
                                        {"drift_term_mean", mu.drift_term.mean},
                                        {"drift_term_se", mu.drift_term.se},
                                        {"jump_term_mean", mu.jump_term.mean},
                                        {"jump_term_se", mu.jump_term.se}};
            const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
            std::filesystem::create_directories(dir);
            const std::string path = dir + "/measure_" + cfg.model + "_" + cfg.hash() + ".json";
            driftlab::atomic_write(path, j.dump(2) + "\n");
            std::cout << "wrote " << path << "\n";
            return 0;
        }

        if (ver->parsed()) {
            int status = 0;
            std::vector<std::string> names =
                suite == "all" ? driftlab::suite_names() : std::vector<std::string>{suite};
            for (const auto& name : names)
                status |= print_report(driftlab::run_suite(name, cfg));
            return status;
        }

        if (repc->parsed()) {
            if (!std::filesystem::is_directory(report_dir)) {
                std::cerr << "error: report directory not found: " << report_dir << "\n";
                return 3;
            }
            int status = 0;
            std::string hash_seen;
            bool any = false;
            for (const auto& entry : std::filesystem::directory_iterator(report_dir)) {
                if (entry.path().extension() != ".json") continue;
                json j = json::parse(driftlab::read_file(entry.path().string()));
                if (!j.contains("experiment") || !j.contains("checks")) continue;
                any = true;
                const std::string h = j.value("config_hash", "");
                if (hash_seen.empty()) hash_seen = h;
                if (h != hash_seen) {
                    std::cerr << "error: mixed config hashes in " << report_dir << " (" << h
                              << " vs " << hash_seen << ")\n";
                    return 2;
                }
                bool all = true;
                for (const auto& c : j["checks"]) {
                    const bool pass = c.value("pass", false);
                    all = all && pass;
                    std::cout << (pass ? "  [PASS] " : "  [FAIL] ")
                              << c.value("name", "?") << "\n";
                }
                std::cout << j["experiment"].get<std::string>() << ": "
                          << (all ? "PASS" : "FAIL") << "\n";
                status |= all ? 0 : 1;
            }
            if (!any) {
                std::cerr << "error: no suite reports found in " << report_dir << "\n";
                return 3;
            }
            return status;
        }
    } catch (const std::invalid_argument& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
