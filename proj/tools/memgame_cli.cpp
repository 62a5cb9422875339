// Command-line front end: JSON config in, CSV + plain-text summaries out.
// Exit codes: 0 success / verification PASS, 1 verification FAIL,
// 2 usage or config error, 3 numerical failure.

#include <clocale>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "memgame/adjoint.hpp"
#include "memgame/bsde.hpp"
#include "memgame/errors.hpp"
#include "memgame/game.hpp"
#include "memgame/malliavin.hpp"
#include "memgame/recursive_utility.hpp"
#include "memgame/report.hpp"

using json = nlohmann::json;
using namespace memgame;

namespace {

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const auto& k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

double require_number(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key))
        throw ConfigError("missing required key '" + key + "' in " + where);
    if (!obj[key].is_number())
        throw ConfigError("key '" + key + "' in " + where + " must be a number");
    return obj[key].get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback) {
    return obj.contains(key) ? obj[key].get<double>() : fallback;
}

std::size_t size_or(const json& obj, const std::string& key, std::size_t fallback) {
    return obj.contains(key) ? obj[key].get<std::size_t>() : fallback;
}

StepFunction step_function_from(const json& v, double horizon, const std::string& where) {
    StepFunction f;
    f.horizon = horizon;
    if (v.is_number()) {
        f.values = {v.get<double>()};
    } else if (v.is_array() && !v.empty()) {
        f.values.clear();
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(where + " entries must be numbers");
            f.values.push_back(x.get<double>());
        }
    } else {
        throw ConfigError(where + " must be a number or a non-empty array");
    }
    return f;
}

struct RunConfig {
    double horizon = 1.0;
    std::size_t n_steps = 200;
    uint64_t seed = 1;
    std::string output_dir = "out";

    json model;
    json controls;
    json bsde;
    json malliavin;

    std::size_t n_paths = 20000;
    std::size_t search_paths = 3000;
    std::size_t derivative_paths = 4000;
    int basis_degree = 2;
    double ridge = 1e-8;
    std::size_t n_bins = 10;

    NashTolerances tolerances;
    double br_rel = 0.05;
    double xp_rel = 0.02;
};

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(root, {"grid", "seed", "output_dir", "model", "controls", "solver",
                      "tolerances", "bsde", "malliavin"},
               "config root");

    RunConfig cfg;
    if (!root.contains("grid")) throw ConfigError("missing required section 'grid'");
    const json& grid = root["grid"];
    check_keys(grid, {"horizon", "n_steps"}, "grid");
    cfg.horizon = require_number(grid, "horizon", "grid");
    cfg.n_steps = static_cast<std::size_t>(require_number(grid, "n_steps", "grid"));

    if (root.contains("seed")) cfg.seed = root["seed"].get<uint64_t>();
    if (root.contains("output_dir")) cfg.output_dir = root["output_dir"].get<std::string>();
    if (root.contains("model")) cfg.model = root["model"];
    if (root.contains("controls")) cfg.controls = root["controls"];
    if (root.contains("bsde")) cfg.bsde = root["bsde"];
    if (root.contains("malliavin")) cfg.malliavin = root["malliavin"];

    if (root.contains("solver")) {
        const json& s = root["solver"];
        check_keys(s, {"n_paths", "search_paths", "derivative_paths", "basis_degree",
                       "ridge", "n_bins"},
                   "solver");
        cfg.n_paths = size_or(s, "n_paths", cfg.n_paths);
        cfg.search_paths = size_or(s, "search_paths", cfg.search_paths);
        cfg.derivative_paths = size_or(s, "derivative_paths", cfg.derivative_paths);
        cfg.basis_degree = static_cast<int>(number_or(s, "basis_degree", 2));
        cfg.ridge = number_or(s, "ridge", 1e-8);
        cfg.n_bins = size_or(s, "n_bins", cfg.n_bins);
        if (cfg.ridge < 0.0) throw ConfigError("solver.ridge must be >= 0");
    }
    if (root.contains("tolerances")) {
        const json& t = root["tolerances"];
        check_keys(t, {"gap_sigmas", "derivative_sigmas", "derivative_dt_coeff",
                       "foc_rel", "bump_rel", "concavity_samples", "br_rel", "xp_rel"},
                   "tolerances");
        cfg.tolerances.gap_sigmas = number_or(t, "gap_sigmas", 3.0);
        cfg.tolerances.derivative_sigmas = number_or(t, "derivative_sigmas", 3.0);
        cfg.tolerances.derivative_dt_coeff = number_or(t, "derivative_dt_coeff", 2.0);
        cfg.tolerances.foc_rel = number_or(t, "foc_rel", 0.05);
        cfg.tolerances.bump_rel = number_or(t, "bump_rel", 1e-3);
        cfg.tolerances.concavity_samples =
            size_or(t, "concavity_samples", cfg.tolerances.concavity_samples);
        cfg.br_rel = number_or(t, "br_rel", 0.05);
        cfg.xp_rel = number_or(t, "xp_rel", 0.02);
        for (double v : {cfg.tolerances.gap_sigmas, cfg.tolerances.derivative_sigmas,
                         cfg.tolerances.foc_rel, cfg.tolerances.bump_rel, cfg.br_rel,
                         cfg.xp_rel})
            if (!(v > 0.0)) throw ConfigError("every tolerance must be positive");
    }
    return cfg;
}

JumpSpec jumps_from(const json& j, const std::string& where) {
    JumpSpec spec;
    if (j.is_null()) return spec;
    check_keys(j, {"intensity", "marks"}, where);
    spec.intensity = number_or(j, "intensity", 0.0);
    if (j.contains("marks")) {
        for (const auto& m : j["marks"]) {
            check_keys(m, {"value", "prob"}, where + ".marks[]");
            spec.mark_values.push_back(require_number(m, "value", where));
            spec.mark_probs.push_back(require_number(m, "prob", where));
        }
    }
    spec.validate();
    return spec;
}

RecursiveUtilityParams recursive_params_from(const RunConfig& cfg) {
    const json& m = cfg.model;
    check_keys(m, {"kind", "x0", "alpha", "eta", "delta", "mu", "sigma", "jumps",
                   "c_min", "c_max"},
               "model");
    RecursiveUtilityParams p;
    p.horizon = cfg.horizon;
    p.x0 = number_or(m, "x0", 1.0);
    auto per_player = [&](const char* key, std::array<StepFunction, 2>& out) {
        if (!m.contains(key)) {
            out = {StepFunction::constant(0.0, cfg.horizon),
                   StepFunction::constant(0.0, cfg.horizon)};
            return;
        }
        const json& v = m[key];
        if (!v.is_array() || v.size() != 2)
            throw ConfigError(std::string("model.") + key +
                              " must be an array of two entries");
        out[0] = step_function_from(v[0], cfg.horizon, std::string("model.") + key);
        out[1] = step_function_from(v[1], cfg.horizon, std::string("model.") + key);
    };
    per_player("alpha", p.alpha);
    per_player("eta", p.eta);
    if (m.contains("delta")) {
        if (!m["delta"].is_array() || m["delta"].size() != 2)
            throw ConfigError("model.delta must be an array of two numbers");
        p.delta = {m["delta"][0].get<double>(), m["delta"][1].get<double>()};
    }
    p.mu = m.contains("mu") ? step_function_from(m["mu"], cfg.horizon, "model.mu")
                            : StepFunction::constant(0.0, cfg.horizon);
    p.sigma = m.contains("sigma")
                  ? step_function_from(m["sigma"], cfg.horizon, "model.sigma")
                  : StepFunction::constant(0.0, cfg.horizon);
    if (m.contains("jumps")) p.jumps = jumps_from(m["jumps"], "model.jumps");
    p.c_min = number_or(m, "c_min", 1e-4);
    p.c_max = number_or(m, "c_max", 1e4);
    p.validate();
    return p;
}

// linear coefficient table: value = const + x X + y1 Y1 + y2 Y2 + m1 L1 + m2 L2
//                                 + u1 U1 + u2 U2
std::function<double(const FlowArgs&)> linear_table(const json& t, const std::string& where) {
    check_keys(t, {"const", "x", "y1", "y2", "m1", "m2", "u1", "u2"}, where);
    const double c0 = number_or(t, "const", 0.0);
    const double cx = number_or(t, "x", 0.0);
    const double cy1 = number_or(t, "y1", 0.0);
    const double cy2 = number_or(t, "y2", 0.0);
    const double cm1 = number_or(t, "m1", 0.0);
    const double cm2 = number_or(t, "m2", 0.0);
    const double cu1 = number_or(t, "u1", 0.0);
    const double cu2 = number_or(t, "u2", 0.0);
    return [=](const FlowArgs& a) {
        return c0 + cx * a.x + cy1 * a.y[0] + cy2 * a.y[1] + cm1 * a.m[0] +
               cm2 * a.m[1] + cu1 * a.u[0] + cu2 * a.u[1];
    };
}

std::vector<double> table_deltas(const RunConfig& cfg) {
    std::vector<double> deltas{0.0, 0.0};
    if (cfg.model.contains("delta")) {
        const json& d = cfg.model["delta"];
        if (!d.is_array() || d.size() != 2)
            throw ConfigError("model.delta must be an array of two numbers");
        deltas = {d[0].get<double>(), d[1].get<double>()};
    }
    return deltas;
}

ModelSpec table_model_from(const RunConfig& cfg) {
    const json& m = cfg.model;
    check_keys(m, {"kind", "x0", "delta", "drift", "diffusion", "jump_coef", "jumps"},
               "model");
    ModelSpec spec;
    spec.x0 = number_or(m, "x0", 1.0);
    if (m.contains("drift"))
        spec.drift = linear_table(m["drift"], "model.drift");
    else
        spec.drift = [](const FlowArgs&) { return 0.0; };
    if (m.contains("diffusion"))
        spec.diffusion = linear_table(m["diffusion"], "model.diffusion");
    else
        spec.diffusion = [](const FlowArgs&) { return 0.0; };
    if (m.contains("jumps")) spec.jump_spec = jumps_from(m["jumps"], "model.jumps");
    if (m.contains("jump_coef")) {
        check_keys(m["jump_coef"], {"const", "x"}, "model.jump_coef");
        const double j0 = number_or(m["jump_coef"], "const", 0.0);
        const double jx = number_or(m["jump_coef"], "x", 0.0);
        spec.jump_coef = [j0, jx](const FlowArgs& a, double zeta) {
            return (j0 + jx * a.x) * zeta;
        };
    } else if (spec.jump_spec.intensity > 0.0) {
        throw ConfigError("model.jump_coef required when jumps are active");
    }
    return spec;
}

std::string model_kind(const RunConfig& cfg) {
    if (cfg.model.is_null()) throw ConfigError("missing required section 'model'");
    if (!cfg.model.contains("kind"))
        throw ConfigError("missing required key 'kind' in model");
    return cfg.model["kind"].get<std::string>();
}

ControlProcess control_from_json(const json& v, const TimeGrid& grid, int player,
                                 const std::string& where) {
    if (v.is_number())
        return ControlProcess::constant(v.get<double>(), grid.n_steps, player);
    if (v.is_array()) {
        std::vector<double> values;
        for (const auto& x : v) values.push_back(x.get<double>());
        if (values.size() != grid.n_steps)
            throw ConfigError(where + " array must have n_steps entries");
        return ControlProcess::piecewise(std::move(values), player);
    }
    throw ConfigError(where + " must be a number or an array");
}

ControlPair controls_from(const RunConfig& cfg, const TimeGrid& grid,
                          const RecursiveUtilityParams* recursive) {
    ControlPair pair{ControlProcess::constant(0.0, grid.n_steps, 0),
                     ControlProcess::constant(0.0, grid.n_steps, 1)};
    if (cfg.controls.is_null()) {
        if (recursive) {
            pair[0] = closed_form_control(*recursive, 0, grid);
            pair[1] = closed_form_control(*recursive, 1, grid);
        }
        return pair;
    }
    check_keys(cfg.controls, {"kind", "scale", "u1", "u2"}, "controls");
    const std::string kind =
        cfg.controls.contains("kind") ? cfg.controls["kind"].get<std::string>() : "values";
    if (kind == "closed-form") {
        if (!recursive)
            throw ConfigError("controls.kind 'closed-form' needs the recursive-utility model");
        std::array<double, 2> scale{1.0, 1.0};
        if (cfg.controls.contains("scale")) {
            const json& s = cfg.controls["scale"];
            if (!s.is_array() || s.size() != 2)
                throw ConfigError("controls.scale must be an array of two numbers");
            scale = {s[0].get<double>(), s[1].get<double>()};
        }
        for (int i = 0; i < 2; ++i) {
            pair[i] = closed_form_control(*recursive, i, grid);
            for (double& v : pair[i].values)
                v = std::clamp(v * scale[i], recursive->c_min, recursive->c_max);
        }
        return pair;
    }
    if (kind != "values")
        throw ConfigError("controls.kind must be 'closed-form' or 'values'");
    if (!cfg.controls.contains("u1") || !cfg.controls.contains("u2"))
        throw ConfigError("controls needs both 'u1' and 'u2'");
    pair[0] = control_from_json(cfg.controls["u1"], grid, 0, "controls.u1");
    pair[1] = control_from_json(cfg.controls["u2"], grid, 1, "controls.u2");
    return pair;
}

SolverConfig solver_config_from(const RunConfig& cfg, bool recursive) {
    SolverConfig solver;
    solver.basis = RegressionBasis::polynomial(cfg.basis_degree, cfg.ridge);
    solver.search_basis = RegressionBasis::polynomial(cfg.basis_degree, cfg.ridge);
    solver.search_paths = cfg.search_paths;
    solver.derivative_paths = cfg.derivative_paths;
    if (recursive) {
        solver.regressors.use_memory = false;
        solver.regressors.use_inverse_x = true;
        solver.search_regressors.use_y = false;
        solver.search_regressors.use_memory = false;
    }
    return solver;
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.output_dir);
    return std::filesystem::path(cfg.output_dir) / name;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg) {
    const std::string kind = model_kind(cfg);
    std::optional<RecursiveUtilityParams> rec;
    ModelSpec model;
    std::vector<double> deltas{0.0, 0.0};
    if (kind == "recursive-utility") {
        rec = recursive_params_from(cfg);
        deltas = {rec->delta[0], rec->delta[1]};
    } else if (kind == "table") {
        model = table_model_from(cfg);
        deltas = table_deltas(cfg);
    } else {
        throw ConfigError("model.kind must be 'recursive-utility' or 'table'");
    }
    TimeGrid grid = make_grid(cfg.horizon, cfg.n_steps, deltas);
    if (rec) model = build_recursive_utility_game(*rec, grid).forward;
    NoiseBatch noise = sample_noise(grid, cfg.n_paths, cfg.seed, model.jump_spec);
    ControlPair controls = controls_from(cfg, grid, rec ? &*rec : nullptr);
    PathBundle bundle = simulate_forward(model, controls, noise);

    CsvWriter csv(out_path(cfg, "paths.csv").string(),
                  {"path", "step", "t", "X", "Y1", "Y2", "L1", "L2", "u1", "u2"});
    for (std::size_t p = 0; p < bundle.n_paths; ++p)
        for (std::size_t s = 0; s <= grid.n_steps; ++s)
            csv.row({CsvWriter::cell(p), CsvWriter::cell(s),
                     CsvWriter::cell(grid.time(s)), CsvWriter::cell(bundle.X(p, s)),
                     CsvWriter::cell(bundle.y(0, p, s)),
                     CsvWriter::cell(bundle.y(1, p, s)),
                     CsvWriter::cell(bundle.memory(0, p, s)),
                     CsvWriter::cell(bundle.memory(1, p, s)),
                     CsvWriter::cell(bundle.control(0, p, s)),
                     CsvWriter::cell(bundle.control(1, p, s))});

    MeanVar terminal = block_mean_var(ExecPolicy::parallel(), bundle.n_paths,
                                      [&](std::size_t p) {
                                          return bundle.X(p, grid.n_steps);
                                      });
    std::ofstream summary(out_path(cfg, "simulate_summary.txt"));
    summary << "paths " << bundle.n_paths << "\n"
            << "steps " << grid.n_steps << "\n"
            << "mean_X_T " << fmt17(terminal.mean) << "\n"
            << "se_X_T " << fmt17(terminal.se()) << "\n"
            << "var_X_T " << fmt17(terminal.variance) << "\n";
    std::cout << "simulate: wrote " << bundle.n_paths
              << " paths, mean X(T) = " << fmt17(terminal.mean) << "\n";
    return 0;
}

// -------------------------------------------------------------------- bsde

int cmd_bsde(const RunConfig& cfg) {
    const std::string kind = model_kind(cfg);
    std::ofstream summary(out_path(cfg, "bsde_summary.txt"));

    if (kind == "recursive-utility") {
        RecursiveUtilityParams rec = recursive_params_from(cfg);
        TimeGrid grid = make_grid(cfg.horizon, cfg.n_steps, {rec.delta[0], rec.delta[1]});
        GameModel game = build_recursive_utility_game(rec, grid);
        NoiseBatch noise = sample_noise(grid, cfg.n_paths, cfg.seed, rec.jumps);
        ControlPair controls = controls_from(cfg, grid, &rec);
        PathBundle bundle = simulate_forward(game.forward, controls, noise);
        SolverConfig solver = solver_config_from(cfg, true);
        for (int i = 0; i < 2; ++i) {
            BsdeSolution sol = solve_bsde_lsmc(game.players[i].bsde, bundle, noise,
                                               solver.basis, solver.policy,
                                               solver.regressors);
            const std::string name = "bsde_player" + std::to_string(i + 1) + ".csv";
            std::vector<std::string> header{"path", "step", "W", "Z"};
            for (std::size_t j = 0; j < sol.K.size(); ++j)
                header.push_back("K" + std::to_string(j));
            CsvWriter csv(out_path(cfg, name).string(), header);
            const std::size_t stride = std::max<std::size_t>(1, bundle.n_paths / 100);
            for (std::size_t p = 0; p < bundle.n_paths; p += stride)
                for (std::size_t s = 0; s <= grid.n_steps; ++s) {
                    std::vector<std::string> row{
                        CsvWriter::cell(p), CsvWriter::cell(s),
                        CsvWriter::cell(sol.W(p, s)),
                        CsvWriter::cell(s < grid.n_steps ? sol.Z(p, s) : 0.0)};
                    for (std::size_t j = 0; j < sol.K.size(); ++j)
                        row.push_back(CsvWriter::cell(
                            s < grid.n_steps ? sol.K[j](p, s) : 0.0));
                    csv.row(row);
                }
            summary << "player" << (i + 1) << "_W0 " << fmt17(sol.w0()) << "\n";
            if (sol.lipschitz_warning)
                summary << "player" << (i + 1) << "_lipschitz_warning 1\n";
            std::cout << "bsde: player " << (i + 1) << " W(0) = " << fmt17(sol.w0())
                      << "\n";
        }
        return 0;
    }

    // table model with a configurable linear driver g = a W + b
    ModelSpec model = table_model_from(cfg);
    TimeGrid grid = make_grid(cfg.horizon, cfg.n_steps, table_deltas(cfg));
    NoiseBatch noise = sample_noise(grid, cfg.n_paths, cfg.seed, model.jump_spec);
    ControlPair controls = controls_from(cfg, grid, nullptr);
    PathBundle bundle = simulate_forward(model, controls, noise);

    double a = 0.0, b = 0.0;
    std::string terminal = "zero";
    if (!cfg.bsde.is_null()) {
        check_keys(cfg.bsde, {"driver_a", "driver_b", "terminal"}, "bsde");
        a = number_or(cfg.bsde, "driver_a", 0.0);
        b = number_or(cfg.bsde, "driver_b", 0.0);
        if (cfg.bsde.contains("terminal"))
            terminal = cfg.bsde["terminal"].get<std::string>();
    }
    DriverSpec driver;
    driver.driver = [a, b](const DriverArgs& w) { return a * w.w + b; };
    if (terminal == "zero")
        driver.terminal = [](double) { return 0.0; };
    else if (terminal == "x")
        driver.terminal = [](double x) { return x; };
    else if (terminal == "x_squared")
        driver.terminal = [](double x) { return x * x; };
    else
        throw ConfigError("bsde.terminal must be one of zero, x, x_squared");

    SolverConfig solver = solver_config_from(cfg, false);
    BsdeSolution sol = solve_bsde_lsmc(driver, bundle, noise, solver.basis, solver.policy);
    std::vector<std::string> header{"path", "step", "W", "Z"};
    for (std::size_t j = 0; j < sol.K.size(); ++j)
        header.push_back("K" + std::to_string(j));
    CsvWriter csv(out_path(cfg, "bsde.csv").string(), header);
    const std::size_t stride = std::max<std::size_t>(1, bundle.n_paths / 100);
    for (std::size_t p = 0; p < bundle.n_paths; p += stride)
        for (std::size_t s = 0; s <= grid.n_steps; ++s) {
            std::vector<std::string> row{CsvWriter::cell(p), CsvWriter::cell(s),
                                         CsvWriter::cell(sol.W(p, s)),
                                         CsvWriter::cell(s < grid.n_steps ? sol.Z(p, s)
                                                                          : 0.0)};
            for (std::size_t j = 0; j < sol.K.size(); ++j)
                row.push_back(
                    CsvWriter::cell(s < grid.n_steps ? sol.K[j](p, s) : 0.0));
            csv.row(row);
        }
    summary << "W0 " << fmt17(sol.w0()) << "\n";
    if (sol.lipschitz_warning) summary << "lipschitz_warning 1\n";
    std::cout << "bsde: W(0) = " << fmt17(sol.w0()) << "\n";
    return 0;
}

// --------------------------------------------------------- check-malliavin

int cmd_check_malliavin(const RunConfig& cfg) {
    TimeGrid grid = make_grid(cfg.horizon, cfg.n_steps, {});
    std::size_t n_paths = cfg.n_paths;
    std::vector<std::string> names{"B(T)", "B(T)^2", "B(T)^3", "increment", "product"};
    std::string phi_name = "brownian";
    if (!cfg.malliavin.is_null()) {
        check_keys(cfg.malliavin, {"n_paths", "functionals", "phi"}, "malliavin");
        n_paths = size_or(cfg.malliavin, "n_paths", n_paths);
        if (cfg.malliavin.contains("functionals")) {
            names.clear();
            for (const auto& v : cfg.malliavin["functionals"])
                names.push_back(v.get<std::string>());
        }
        if (cfg.malliavin.contains("phi"))
            phi_name = cfg.malliavin["phi"].get<std::string>();
    }

    auto functional_by_name = [&](const std::string& name) -> WienerFunctional {
        const double T = cfg.horizon;
        if (name == "B(T)") return WienerFunctional::brownian(T);
        if (name == "B(T)^2") return WienerFunctional::brownian_squared(T);
        if (name == "B(T)^3") return WienerFunctional::brownian_cubed(T);
        if (name == "B(T/2)") return WienerFunctional::brownian(T / 2);
        if (name == "increment") return WienerFunctional::increment(T / 2, T);
        if (name == "product") return WienerFunctional::product(T / 2, T);
        if (name == "const") return WienerFunctional::constant(1.0);
        throw ConfigError("unknown functional name: " + name);
    };
    AdaptedProcess phi;
    if (phi_name == "brownian")
        phi = [](const std::vector<double>& b, const TimeGrid&, std::size_t s) {
            return b[s];
        };
    else if (phi_name == "one")
        phi = [](const std::vector<double>&, const TimeGrid&, std::size_t) { return 1.0; };
    else if (phi_name == "zero")
        phi = [](const std::vector<double>&, const TimeGrid&, std::size_t) { return 0.0; };
    else
        throw ConfigError("malliavin.phi must be one of brownian, one, zero");

    IdentityCheckConfig icfg;
    icfg.n_paths = n_paths;
    icfg.seed = cfg.seed;

    CsvWriter csv(out_path(cfg, "malliavin_report.csv").string(),
                  {"functional", "check", "lhs", "rhs", "se_lhs", "se_rhs", "tolerance",
                   "pass", "wide_se"});
    std::ofstream summary(out_path(cfg, "malliavin_summary.txt"));
    bool all_pass = true;
    std::cout << "functional            check        lhs          rhs          pass\n";
    for (const std::string& name : names) {
        WienerFunctional f = functional_by_name(name);
        std::vector<IdentityReport> reports{
            check_duality(f, phi, grid, icfg),
            check_clark_ocone(f, grid, icfg),
            check_variance_identity(f, grid, icfg),
        };
        for (const IdentityReport& r : reports) {
            const double scale = std::max({1.0, std::abs(r.lhs), std::abs(r.rhs)});
            const bool wide = 3.0 * (r.se_lhs + r.se_rhs) > 0.1 * scale;
            csv.row({r.functional, r.check, CsvWriter::cell(r.lhs),
                     CsvWriter::cell(r.rhs), CsvWriter::cell(r.se_lhs),
                     CsvWriter::cell(r.se_rhs), CsvWriter::cell(r.tolerance),
                     CsvWriter::cell(r.pass), CsvWriter::cell(wide)});
            char line[160];
            std::snprintf(line, sizeof(line), "%-20s %-12s %-12.6g %-12.6g %s%s",
                          r.functional.c_str(), r.check.c_str(), r.lhs, r.rhs,
                          r.pass ? "PASS" : "FAIL", wide ? " (WIDE-SE)" : "");
            std::cout << line << "\n";
            summary << r.functional << " " << r.check << " "
                    << (r.pass ? "PASS" : "FAIL") << (wide ? " WIDE-SE" : "") << "\n";
            // a failed check with wide standard errors is inconclusive:
            // warn, do not hard-fail
            all_pass = all_pass && (r.pass || wide);
        }
    }
    summary << "overall " << (all_pass ? "PASS" : "FAIL") << "\n";
    return all_pass ? 0 : 1;
}

// ----------------------------------------------------------------- adjoint

int cmd_adjoint(const RunConfig& cfg) {
    if (model_kind(cfg) != "recursive-utility")
        throw ConfigError("the adjoint command needs the recursive-utility model");
    RecursiveUtilityParams rec = recursive_params_from(cfg);
    TimeGrid grid = make_grid(cfg.horizon, cfg.n_steps, {rec.delta[0], rec.delta[1]});
    GameModel game = build_recursive_utility_game(rec, grid);
    NoiseBatch noise = sample_noise(grid, cfg.n_paths, cfg.seed, rec.jumps);
    ControlPair controls = controls_from(cfg, grid, &rec);
    PathBundle bundle = simulate_forward(game.forward, controls, noise);
    SolverConfig solver = solver_config_from(cfg, true);

    std::ofstream summary(out_path(cfg, "adjoint_summary.txt"));
    for (int i = 0; i < 2; ++i) {
        const PlayerSpec& ps = game.players[i];
        BsdeSolution bsde = solve_bsde_lsmc(ps.bsde, bundle, noise, solver.basis,
                                            solver.policy, solver.regressors);
        PathMatrix lambda = solve_lambda_forward(ps.hamiltonian, ps.adjoint_terminal,
                                                 bundle, bsde, noise, solver.policy);
        AdjointSolution adjoint;
        adjoint.lambda = lambda;
        adjoint.pqr = ps.adjoint_p_solver(bundle, lambda, noise, solver);
        adjoint.p2 = PathMatrix(bundle.n_paths, grid.n_steps + 1);
        adjoint.q2 = PathMatrix(bundle.n_paths, grid.n_steps + 1);
        ResidualReport residual =
            verify_noisy_memory_residual(ps.hamiltonian, adjoint, bundle, bsde, noise,
                                      solver.basis, nullptr, solver.policy);

        const std::string name = "adjoint_player" + std::to_string(i + 1) + ".csv";
        CsvWriter csv(out_path(cfg, name).string(),
                      {"step", "t", "mean_lambda", "mean_p", "mean_q2", "residual"});
        for (std::size_t s = 0; s < grid.n_steps; ++s) {
            MeanVar ml = block_mean_var(solver.policy, bundle.n_paths,
                                        [&](std::size_t p) { return lambda(p, s); });
            MeanVar mp = block_mean_var(solver.policy, bundle.n_paths, [&](std::size_t p) {
                return adjoint.pqr.W(p, s);
            });
            csv.row({CsvWriter::cell(s), CsvWriter::cell(grid.time(s)),
                     CsvWriter::cell(ml.mean), CsvWriter::cell(mp.mean),
                     CsvWriter::cell(adjoint.q2_mean(s)),
                     CsvWriter::cell(residual.mean_residual_by_step[s])});
        }
        summary << "player" << (i + 1) << "_mean_abs_residual "
                << fmt17(residual.mean_abs_residual) << "\n"
                << "player" << (i + 1) << "_lambda_structural_diff "
                << fmt17(residual.lambda_structural_max_diff) << "\n";
        std::cout << "adjoint: player " << (i + 1)
                  << " mean |residual| = " << fmt17(residual.mean_abs_residual) << "\n";
    }
    return 0;
}

// ------------------------------------------------------------- verify-nash

void write_certificate(const RunConfig& cfg, const NashCertificate& cert,
                       const std::string& csv_name, const std::string& summary_name) {
    CsvWriter csv(out_path(cfg, csv_name).string(),
                  {"player", "metric", "index", "value", "se", "pass"});
    for (int i = 0; i < 2; ++i) {
        const PlayerCertificate& pc = cert.players[i];
        csv.row({CsvWriter::cell(i + 1), "j_candidate", "",
                 CsvWriter::cell(pc.j_candidate), CsvWriter::cell(pc.j_candidate_se),
                 ""});
        csv.row({CsvWriter::cell(i + 1), "best_response_gap", "",
                 CsvWriter::cell(pc.best_response_gap),
                 CsvWriter::cell(pc.best_response_gap_se), CsvWriter::cell(pc.pass_gap)});
        for (std::size_t b = 0; b < pc.best_response_params.size(); ++b)
            csv.row({CsvWriter::cell(i + 1), "best_response_param", CsvWriter::cell(b),
                     CsvWriter::cell(pc.best_response_params[b]), "", ""});
        for (const auto& dd : pc.gateaux) {
            csv.row({CsvWriter::cell(i + 1), "gateaux:" + dd.direction, "",
                     CsvWriter::cell(dd.value), CsvWriter::cell(dd.se), ""});
            csv.row({CsvWriter::cell(i + 1), "gateaux_hamiltonian:" + dd.direction, "",
                     CsvWriter::cell(dd.hamiltonian_form),
                     CsvWriter::cell(dd.hamiltonian_form_se), ""});
        }
        for (std::size_t s = 0; s < pc.foc.mean.size(); ++s)
            csv.row({CsvWriter::cell(i + 1), "foc_mean", CsvWriter::cell(s),
                     CsvWriter::cell(pc.foc.mean[s]), CsvWriter::cell(pc.foc.se[s]),
                     ""});
        csv.row({CsvWriter::cell(i + 1), "foc_worst_excess", "",
                 CsvWriter::cell(pc.foc_worst_excess), "",
                 CsvWriter::cell(pc.pass_foc)});
        csv.row({CsvWriter::cell(i + 1), "concavity_violations", "",
                 CsvWriter::cell(pc.concavity.n_violations), "",
                 CsvWriter::cell(pc.pass_concavity)});
        csv.row({CsvWriter::cell(i + 1), "lambda_terminal_min", "",
                 CsvWriter::cell(pc.concavity.lambda_terminal_min), "",
                 CsvWriter::cell(pc.concavity.lambda_terminal_nonneg)});
        csv.row({CsvWriter::cell(i + 1), "psi_monotone", "", "", "",
                 CsvWriter::cell(pc.psi_monotone)});
    }

    std::ofstream summary(out_path(cfg, summary_name));
    summary << "verdict " << (cert.pass ? "PASS" : "FAIL") << "\n"
            << "scope " << cert.scope_note << "\n";
    for (int i = 0; i < 2; ++i) {
        const PlayerCertificate& pc = cert.players[i];
        summary << "player" << (i + 1) << "_J " << fmt17(pc.j_candidate) << "\n"
                << "player" << (i + 1) << "_gap " << fmt17(pc.best_response_gap)
                << " pass " << pc.pass_gap << "\n"
                << "player" << (i + 1) << "_gateaux_pass " << pc.pass_gateaux << "\n"
                << "player" << (i + 1) << "_foc_pass " << pc.pass_foc << "\n"
                << "player" << (i + 1) << "_concavity_pass " << pc.pass_concavity
                << "\n";
    }
}

int cmd_verify_nash(const RunConfig& cfg) {
    if (model_kind(cfg) != "recursive-utility")
        throw ConfigError("verify-nash needs the recursive-utility model");
    if (cfg.controls.is_null())
        throw ConfigError("verify-nash needs a 'controls' section with the candidates");
    RecursiveUtilityParams rec = recursive_params_from(cfg);
    TimeGrid grid = make_grid(cfg.horizon, cfg.n_steps, {rec.delta[0], rec.delta[1]});
    GameModel game = build_recursive_utility_game(rec, grid);
    NoiseBatch noise = sample_noise(grid, cfg.n_paths, cfg.seed, rec.jumps);
    ControlPair candidates = controls_from(cfg, grid, &rec);
    SolverConfig solver = solver_config_from(cfg, true);

    std::array<ControlFamily, 2> families;
    for (int i = 0; i < 2; ++i) {
        std::vector<double> initial(cfg.n_bins), lo(cfg.n_bins), hi(cfg.n_bins);
        for (std::size_t b = 0; b < cfg.n_bins; ++b) {
            const std::size_t mid = (b * grid.n_steps + grid.n_steps / 2) / cfg.n_bins;
            const double v = candidates[i].value(mid, grid.time(mid), rec.x0);
            initial[b] = v;
            lo[b] = std::max(rec.c_min, v / 4.0);
            hi[b] = std::min(rec.c_max, v * 4.0);
        }
        families[i] = ControlFamily::piecewise_bins(grid, cfg.n_bins, rec.c_min,
                                                    rec.c_max, initial, i);
        families[i].lo = lo;
        families[i].hi = hi;
    }

    NashCertificate cert =
        certify_nash(game, candidates, families, noise, solver, cfg.tolerances);
    write_certificate(cfg, cert, "certificate.csv", "certificate_summary.txt");
    std::cout << "verify-nash: " << (cert.pass ? "PASS" : "FAIL") << "\n";
    return cert.pass ? 0 : 1;
}

// ------------------------------------------------------- example-recursive

int cmd_example_recursive(const RunConfig& cfg) {
    if (model_kind(cfg) != "recursive-utility")
        throw ConfigError("example-recursive needs the recursive-utility model");
    RecursiveUtilityParams rec = recursive_params_from(cfg);

    BenchmarkConfig bench;
    bench.n_steps = cfg.n_steps;
    bench.n_paths = cfg.n_paths;
    bench.search_paths = cfg.search_paths;
    bench.derivative_paths = cfg.derivative_paths;
    bench.n_bins = cfg.n_bins;
    bench.seed = cfg.seed;
    bench.tolerances = cfg.tolerances;
    bench.br_rel_tol = cfg.br_rel;
    bench.xp_rel_tol = cfg.xp_rel;
    if (!cfg.controls.is_null() && cfg.controls.contains("scale")) {
        const json& s = cfg.controls["scale"];
        if (!s.is_array() || s.size() != 2)
            throw ConfigError("controls.scale must be an array of two numbers");
        bench.candidate_scale = {s[0].get<double>(), s[1].get<double>()};
    }

    BenchmarkReport rep = run_benchmark(rec, bench);

    CsvWriter csv(out_path(cfg, "benchmark.csv").string(),
                  {"t", "c1_star", "c2_star", "br1", "br2", "rel_err1", "rel_err2"});
    for (std::size_t b = 0; b < rep.bin_mid_t.size(); ++b)
        csv.row({CsvWriter::cell(rep.bin_mid_t[b]),
                 CsvWriter::cell(rep.c_star_mid[0][b]),
                 CsvWriter::cell(rep.c_star_mid[1][b]),
                 CsvWriter::cell(rep.br_values[0][b]),
                 CsvWriter::cell(rep.br_values[1][b]),
                 CsvWriter::cell(rep.br_rel_err[0][b]),
                 CsvWriter::cell(rep.br_rel_err[1][b])});

    CsvWriter xp_csv(out_path(cfg, "benchmark_xp.csv").string(),
                     {"t", "player", "numeric", "quadrature", "rel_err"});
    for (int i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < rep.xp_times.size(); ++k)
            xp_csv.row({CsvWriter::cell(rep.xp_times[k]), CsvWriter::cell(i + 1),
                        CsvWriter::cell(rep.xp_numeric[i][k]),
                        CsvWriter::cell(rep.xp_quadrature[i][k]),
                        CsvWriter::cell(rep.xp_rel_err[i][k])});

    write_certificate(cfg, rep.certificate, "benchmark_certificate.csv",
                      "benchmark_certificate_summary.txt");

    std::ofstream summary(out_path(cfg, "benchmark_summary.txt"));
    summary << "verdict " << (rep.pass() ? "PASS" : "FAIL") << "\n"
            << "certificate " << (rep.certificate.pass ? "PASS" : "FAIL") << "\n"
            << "best_response_within_tol " << rep.pass_best_response << "\n"
            << "xp_within_tol " << rep.pass_xp << "\n"
            << "gamma_identity_max_rel " << fmt17(rep.gamma_identity_max_rel) << "\n";
    for (int i = 0; i < 2; ++i) {
        summary << "player" << (i + 1) << "_gateaux";
        for (const auto& dd : rep.certificate.players[i].gateaux)
            summary << " " << fmt17(dd.value);
        summary << "\n";
    }
    std::cout << "example-recursive: " << (rep.pass() ? "PASS" : "FAIL") << "\n";
    return rep.pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C");

    CLI::App app{"Numerical laboratory for two-player stochastic differential games "
                 "with delay and noisy memory"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::optional<std::size_t> paths_override, steps_override;

    app.add_option("--config", config_path, "JSON configuration file")->required();
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--out", out_override, "override the output directory");
    app.add_option("--paths", paths_override, "override solver.n_paths");
    app.add_option("--steps", steps_override, "override grid.n_steps");

    auto* c_sim = app.add_subcommand("simulate", "simulate forward paths, dump CSV");
    auto* c_bsde = app.add_subcommand("bsde", "solve the backward equation(s)");
    auto* c_mal = app.add_subcommand("check-malliavin", "run the identity checks");
    auto* c_adj = app.add_subcommand("adjoint", "solve the adjoint system, dump CSV");
    auto* c_nash = app.add_subcommand("verify-nash", "certify a candidate control pair");
    auto* c_ex = app.add_subcommand("example-recursive",
                                    "end-to-end consumption-game benchmark");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (seed_override) cfg.seed = *seed_override;
        if (out_override) cfg.output_dir = *out_override;
        if (paths_override) cfg.n_paths = *paths_override;
        if (steps_override) cfg.n_steps = *steps_override;

        if (c_sim->parsed()) return cmd_simulate(cfg);
        if (c_bsde->parsed()) return cmd_bsde(cfg);
        if (c_mal->parsed()) return cmd_check_malliavin(cfg);
        if (c_adj->parsed()) return cmd_adjoint(cfg);
        if (c_nash->parsed()) return cmd_verify_nash(cfg);
        if (c_ex->parsed()) return cmd_example_recursive(cfg);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}
