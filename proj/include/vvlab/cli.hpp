#pragma once

// Command-line driver: one subcommand per experiment, JSON config with
// environment and flag overrides, exit codes 0 (ok), 1 (bad input),
// 2 (numerical abort).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vvlab/config.hpp"
#include "vvlab/duality.hpp"
#include "vvlab/error.hpp"
#include "vvlab/harness.hpp"
#include "vvlab/io.hpp"
#include "vvlab/log.hpp"
#include "vvlab/selftest.hpp"

namespace vvlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPrecondition = 1;
inline constexpr int kExitNumerical = 2;

struct CliContext {
  SweepConfig config;
  std::filesystem::path out;
  std::vector<std::string> outputs;  // relative to out

  std::filesystem::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

namespace cli {

inline void cmd_field(CliContext& ctx) {
  const auto& c = ctx.config;
  const auto b = make_field<2>(c.field);
  const GridSpec grid(2, c.grid_n);
  const auto comps = grid_velocity(b, 0.0, grid);
  io::write_field(ctx.file("field_x"), comps[0], {b.name() + "_x", 0.0});
  io::write_field(ctx.file("field_y"), comps[1], {b.name() + "_y", 0.0});
  io::write_json(ctx.file("field.json"),
                 {{"field", c.field.to_json()},
                  {"regularity", b.regularity().describe()},
                  {"steady", b.steady()},
                  {"grid_n", c.grid_n},
                  {"max_speed", max_speed(b, 0.0, grid)},
                  {"relative_divergence", relative_divergence(b, 0.0, grid)},
                  {"sobolev_p", c.sobolev_p},
                  {"gradient_seminorm", sobolev_seminorm(b, 0.0, c.sobolev_p, grid)}});
}

inline void cmd_flow(CliContext& ctx) {
  const auto& c = ctx.config;
  const auto b = make_field<2>(c.field);
  const auto cloud = sweep_cloud(c, b);
  const double fdt = resolved_flow_dt(c);
  const auto fm = integrate_flow(b, 0.0, c.t_end, cloud, fdt, c.threads);
  export_flow_map(ctx.file("flow_map"), fm);
  ctx.outputs.push_back("flow_map.csv");
  nlohmann::json j = {{"field", c.field.to_json()},
                      {"t", 0.0},
                      {"s", c.t_end},
                      {"flow_dt", fdt},
                      {"particles", cloud.size()},
                      {"cloud", cloud.provenance.describe()},
                      {"steps", fm.stats.steps},
                      {"refined_steps", fm.stats.refined_steps},
                      {"max_local_error", fm.stats.max_local_error}};
  int bins = 16;
  while (bins > 1 && cloud.size() < static_cast<std::size_t>(100 * bins * bins)) --bins;
  if (cloud.size() >= 100) {
    j["bins_per_axis"] = bins;
    j["measure_defect"] = measure_preservation_defect(fm, bins);
    j["noise_level"] = multinomial_noise_level(cloud.size(), static_cast<std::size_t>(bins * bins));
  }
  io::write_json(ctx.file("flow.json"), j);
}

inline void cmd_solve(CliContext& ctx) {
  const auto& c = ctx.config;
  const auto b = make_field<2>(c.field);
  const GridSpec grid(2, c.grid_n);
  ScalarField u0 = make_initial<2>(c.initial, grid);
  const double dt = resolved_dt(c, b);
  auto times = record_times(c);
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.epsilon_ladder.size(); ++i) {
    const double eps = c.epsilon_ladder[i];
    const ScalarField v0 = c.mollify_initial ? mollify(u0, eps) : u0;
    const auto r = solve_ade(b, v0, eps, c.t_end, grid, dt, times);
    const std::string name = "solve_" + std::to_string(i);
    export_solution(ctx.out, name, r);
    ctx.outputs.push_back(name);
    runs.push_back({{"epsilon", eps},
                    {"steps", r.steps},
                    {"energy_identity_residual", energy_identity_residual(r.ledger, r.ledger.entries.front().l2sq)},
                    {"dissipation", r.ledger.total_dissipation()},
                    {"initial_norms", {r.initial_norms.l1, r.initial_norms.l2, r.initial_norms.linf}},
                    {"max_snapshot_norms", {r.max_snapshot_norms.l1, r.max_snapshot_norms.l2, r.max_snapshot_norms.linf}}});
  }
  io::write_json(ctx.file("solve.json"), {{"dt", dt}, {"runs", runs}});
}

inline void cmd_fk(CliContext& ctx) {
  const auto& c = ctx.config;
  const auto b = make_field<2>(c.field);
  const GridSpec grid(2, c.grid_n);
  const double eps = c.epsilon_ladder.front();
  const ScalarField u0 = make_initial<2>(c.initial, grid);
  const auto probes = uniform_cloud<2>(static_cast<std::size_t>(c.probes), c.seed ^ 0xf00dULL);
  const NoiseSpec noise{eps, c.seed, c.samples};
  const auto mc = feynman_kac_solution(b, u0, c.t_end, probes, noise, resolved_flow_dt(c), c.threads);
  const auto ref = solve_ade(b, u0, eps, c.t_end, grid, resolved_dt(c, b));
  const TrigInterpolant<2> spectral(ref.final_field);
  std::ofstream csv(ctx.file("fk.csv"));
  csv << std::setprecision(17) << "x,y,mc_mean,std_error,spectral,z\n";
  std::size_t within = 0;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const double s = spectral(probes.points[p]);
    const double z = mc[p].std_error > 0.0 ? (mc[p].value - s) / mc[p].std_error : 0.0;
    if (std::abs(z) <= 4.0) ++within;
    csv << probes.points[p][0] << ',' << probes.points[p][1] << ',' << mc[p].value << ',' << mc[p].std_error << ','
        << s << ',' << z << '\n';
  }
  io::write_json(ctx.file("fk.json"), {{"epsilon", eps},
                                       {"samples", c.samples},
                                       {"probes", probes.size()},
                                       {"within_4_std_errors", within},
                                       {"t", c.t_end}});
}

inline void cmd_converge(CliContext& ctx) {
  const auto rec = run_selection_sweep(ctx.config);
  for (const char* f : {"aggregate.csv", "plot_data.csv"}) ctx.outputs.push_back(f);
  for (std::size_t i = 0; i < rec.points.size(); ++i) ctx.outputs.push_back("run_" + std::to_string(i) + ".json");
  const auto modulus = estimate_modulus(rec.u0, default_shift_ladder(rec.u0.grid()));
  io::write_json(ctx.file("rate_modulo.json"), rate_modulo_check(rec, modulus).to_json());
  io::write_json(ctx.file("modulus.json"), modulus.to_json());
}

inline void cmd_dissipation(CliContext& ctx) {
  dissipation_sweep(ctx.config);
  for (const char* f : {"dissipation.json", "dissipation.csv"}) ctx.outputs.push_back(f);
}

inline void cmd_stability(CliContext& ctx) {
  flow_stability_sweep(ctx.config);
  viscosity_stability_sweep(ctx.config);
  for (const char* f : {"flow_stability.json", "viscosity_stability.json"}) ctx.outputs.push_back(f);
}

inline void cmd_casimir(CliContext& ctx) {
  auto c = ctx.config;
  c.output_dir.clear();
  const auto rec = run_selection_sweep(c);
  io::write_json(ctx.file("casimir.json"), casimir_check(rec).to_json());
}

inline void cmd_duality(CliContext& ctx) {
  const auto& c = ctx.config;
  const auto b = make_field<2>(c.field);
  const GridSpec grid(2, c.grid_n);
  const ScalarField u0 = make_initial<2>(c.initial, grid);
  DualityOptions o;
  o.t_end = c.t_end;
  o.slabs = c.duality_slabs;
  o.flow_dt = c.flow_dt;
  o.threads = c.threads;
  const double dt = resolved_dt(c, b);
  auto rep = pairing_identity(b, u0, c.forcing, grid, dt, c.epsilon_proxy, o);
  rep.duhamel_defect = duhamel_defect(b, c.forcing, sweep_cloud(c, b), dt, c.epsilon_proxy, grid, o);
  io::write_json(ctx.file("duality.json"), rep.to_json());
}

inline void cmd_analysis(CliContext& ctx, const std::string& action) {
  if (action == "selftest") {
    const auto rep = analysis_property_suite(1000, ctx.config.seed);
    io::write_json(ctx.file("analysis_selftest.json"), rep.to_json());
    std::cout << "analysis property suite: " << (rep.passed() ? "PASS" : "FAIL") << '\n';
    for (const auto& p : rep.properties)
      std::cout << "  " << p.name << ": " << p.checks - p.failures << "/" << p.checks << " checks hold\n";
    if (!rep.passed()) throw NumericalAbort("analysis property suite reported failures");
    return;
  }
  auto c = ctx.config;
  c.output_dir.clear();
  const auto rec = run_selection_sweep(c);
  io::write_json(ctx.file("psi_sweep.json"), psi_sweep_diagnostic(rec).to_json());
}

}  // namespace cli

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run_command(int argc, const char* const* argv, const EnvLookup& env = process_environment()) {
  CLI::App app{"vvlab: vanishing-viscosity selection laboratory", "vvlab"};
  app.set_version_flag("--version", std::string(kCodeVersion));
  std::string config_path, out_dir;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 4096u));
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides seed)");
  app.add_flag("--verbose", verbose, "info-level logs on standard error");
  app.require_subcommand(1, 1);
  app.fallthrough();

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"field", "sample a velocity field and report its regularity"},
      {"flow", "integrate the regular Lagrangian flow of a particle cloud"},
      {"solve", "advection-diffusion solves across the epsilon ladder"},
      {"fk", "Feynman-Kac Monte Carlo against the spectral solution"},
      {"converge", "selection sweep: L1 errors against the Lagrangian solution"},
      {"dissipation", "energy dissipation across the epsilon ladder"},
      {"stability", "flow stability and viscosity stability sweeps"},
      {"casimir", "Casimir defects of Lagrangian and viscous solutions"},
      {"duality", "pairing identity and Duhamel defect"},
      {"analysis", "analysis toolkit: 'selftest' property suite or 'psi' sweep diagnostic"}};
  std::string analysis_action = "selftest";
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "analysis")
      sub->add_option("action", analysis_action, "selftest or psi")->check(CLI::IsMember({"selftest", "psi"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string detail = e.what();
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (a.empty() || a.front() == '-') continue;
      const std::string prev = argv[i - 1];
      if (i > 1 && prev.front() == '-' && prev != "--verbose" && prev.find('=') == std::string::npos) continue;
      bool known = false;
      for (const auto& cmd : commands) known = known || cmd.first == a;
      if (!known) detail = "unknown subcommand '" + a + "'";
      break;
    }
    log::error("invalid command line", {{"detail", detail}});
    std::cerr << app.help();
    return kExitPrecondition;
  }
  log::verbose_flag() = verbose;
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const auto started = std::chrono::steady_clock::now();
    std::string text = "{}";
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      require(static_cast<bool>(in), "--config: cannot open " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    CliContext ctx;
    {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ContractViolation(std::string("config: invalid JSON (") + e.what() + ")");
      }
      require(j.is_object(), "config: top level must be a JSON object");
      if (seed_opt->count() > 0) j["seed"] = seed;
      if (threads > 0) j["threads"] = threads;
      if (!out_dir.empty()) j["output_dir"] = out_dir;
      ctx.config = config_from_json(std::move(j), env);
    }
    if (ctx.config.output_dir.empty()) ctx.config.output_dir = "vvlab_out/" + command;
    ctx.out = ctx.config.output_dir;
    std::filesystem::create_directories(ctx.out);
    io::write_json(ctx.file("config.json"), to_json(ctx.config));
    log::info("running command", {{"command", command}, {"out", ctx.out.string()}});

    if (command == "field") cli::cmd_field(ctx);
    else if (command == "flow") cli::cmd_flow(ctx);
    else if (command == "solve") cli::cmd_solve(ctx);
    else if (command == "fk") cli::cmd_fk(ctx);
    else if (command == "converge") cli::cmd_converge(ctx);
    else if (command == "dissipation") cli::cmd_dissipation(ctx);
    else if (command == "stability") cli::cmd_stability(ctx);
    else if (command == "casimir") cli::cmd_casimir(ctx);
    else if (command == "duality") cli::cmd_duality(ctx);
    else if (command == "analysis") cli::cmd_analysis(ctx, analysis_action);

    ExperimentRecord rec;
    rec.config = to_json(ctx.config);
    rec.code_version = kCodeVersion;
    rec.outputs = ctx.outputs;
    rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    rec.seeds = {ctx.config.seed};
    rec.environment = environment_fingerprint();
    io::write_json(ctx.out / "record.json", rec.to_json());
    log::info("command finished", {{"command", command}, {"seconds", rec.wall_clock_seconds}});
    return kExitOk;
  } catch (const ContractViolation& e) {
    log::error("precondition failure", {{"command", command}, {"detail", e.what()}});
    return kExitPrecondition;
  } catch (const NumericalAbort& e) {
    log::error("numerical abort", {{"command", command}, {"detail", e.what()}});
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    log::error("filesystem error", {{"command", command}, {"detail", e.what()}});
    return kExitPrecondition;
  }
}

}  // namespace vvlab
