// rgti: run scenarios, print Bode tables, check the mode-transition table
// and sweep the PV curve.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rgti/bode.hpp"
#include "rgti/params.hpp"
#include "rgti/scenario.hpp"
#include "rgti/simulator.hpp"
#include "rgti/supervisor.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw rgti::ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Common {
  std::string params_file;
  std::string controls_file;

  rgti::SystemParams system() const {
    return params_file.empty() ? rgti::SystemParams::reference() : rgti::parse_system_params(read_file(params_file));
  }
  rgti::ControlDesign design(const rgti::SystemParams& sys) const {
    auto d = rgti::design_controls(sys);
    return controls_file.empty() ? d : rgti::parse_controls(read_file(controls_file), d);
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--params", c.params_file, "system parameter file (defaults: the 3.6 kW reference system)")
      ->check(CLI::ExistingFile);
  app->add_option("--controls", c.controls_file, "controller gain file overriding the designed gains")
      ->check(CLI::ExistingFile);
}

struct RunOutcome {
  std::string file;
  std::string report;
  bool passed = false;
};

RunOutcome run_one(const std::string& file, const fs::path& out_dir, std::optional<double> dt,
                   const rgti::SystemParams& sys, const rgti::ControlDesign& design) {
  RunOutcome o{file, {}, false};
  std::ostringstream rep;
  try {
    const auto sc = rgti::parse_scenario(read_file(file));
    const auto res = rgti::run(sc, sys, dt, design);
    rgti::write_report(rep, res.report);
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ofstream trace(out_dir / (sc.name + ".csv"));
      res.trace.write_csv(trace);
      std::ofstream tr(out_dir / (sc.name + ".transitions.csv"));
      rgti::write_transitions_csv(tr, res.report.transitions);
      std::ofstream txt(out_dir / (sc.name + ".report.txt"));
      rgti::write_report(txt, res.report);
      if (!trace || !tr || !txt) throw rgti::ConfigError("cannot write outputs to '" + out_dir.string() + "'");
    }
    o.passed = res.report.passed();
  } catch (const rgti::Error& e) {
    rep << "error: " << e.what() << '\n';
  }
  o.report = rep.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconfigurable grid-tied PV inverter: simulation and control-design toolkit"};
  app.require_subcommand(1);

  // run
  Common run_common;
  std::vector<std::string> files;
  std::string out_dir;
  double dt = 0.0;
  int jobs = 1;
  auto* run = app.add_subcommand("run", "run scenario files and check their expectations");
  run->add_option("scenarios", files, "scenario files")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "directory for traces and reports (default: $RGTI_OUT_DIR)");
  run->add_option("--dt", dt, "integration step in seconds (overrides the scenario)")->check(CLI::PositiveNumber);
  run->add_option("-j,--jobs", jobs, "scenarios run in parallel")->check(CLI::Range(1, 256));
  add_common(run, run_common);

  // bode
  Common bode_common;
  std::string tf_name;
  rgti::BodeOptions bode_opt;
  std::optional<double> f_hi;
  auto* bode = app.add_subcommand("bode", "print f_hz,mag_db,phase_deg for a named transfer function");
  bode->add_option("tf", tf_name, "Gpv, Gpi, Hv, Hi, H1, H2, loop_v, loop_i, loop_1 or loop_2")->required();
  bode->add_flag("--numeric", bode_opt.numeric, "add the response measured on the nonlinear model (Gpv, Gpi)");
  bode->add_option("--f-lo", bode_opt.f_lo, "lowest frequency in Hz")->check(CLI::PositiveNumber);
  bode->add_option("--f-hi", f_hi, "highest frequency in Hz (default 10 kHz, 1 kHz with --numeric)")
      ->check(CLI::PositiveNumber);
  bode->add_option("--per-decade", bode_opt.per_decade, "points per decade")->check(CLI::Range(1, 1000));
  add_common(bode, bode_common);

  // fsm-check
  auto* fsm = app.add_subcommand("fsm-check", "enumerate every mode and flag combination through the transition table");

  // sweep-mpp
  Common sweep_common;
  std::vector<double> irradiance{1.0};
  double resolution = 0.01;
  auto* sweep = app.add_subcommand("sweep-mpp", "brute-force maximum power point of the PV curve");
  sweep->add_option("-g,--irradiance", irradiance, "per-unit irradiance values")->check(CLI::Range(1e-6, 10.0));
  sweep->add_option("--resolution", resolution, "voltage step in volts")->check(CLI::PositiveNumber);
  add_common(sweep, sweep_common);

  // dump-params
  Common dump_common;
  std::string what = "all";
  auto* dump = app.add_subcommand("dump-params", "print the system parameters and designed controller gains");
  dump->add_option("--what", what, "system, controls or all (files for --params / --controls)")
      ->check(CLI::IsMember({"system", "controls", "all"}));
  add_common(dump, dump_common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (out_dir.empty())
        if (const char* env = std::getenv("RGTI_OUT_DIR")) out_dir = env;
      const auto sys = run_common.system();
      const auto design = run_common.design(sys);
      const std::optional<double> dt_opt = dt > 0.0 ? std::optional<double>(dt) : std::nullopt;
      std::vector<RunOutcome> outcomes(files.size());
      for (std::size_t first = 0; first < files.size(); first += static_cast<std::size_t>(jobs)) {
        std::vector<std::future<RunOutcome>> batch;
        const std::size_t last = std::min(files.size(), first + static_cast<std::size_t>(jobs));
        for (std::size_t k = first; k < last; ++k)
          batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_one, files[k],
                                     fs::path(out_dir), dt_opt, std::cref(sys), std::cref(design)));
        for (std::size_t k = first; k < last; ++k) outcomes[k] = batch[k - first].get();
      }
      bool all = true;
      for (const auto& o : outcomes) {
        std::cout << "== " << o.file << '\n' << o.report;
        all = all && o.passed;
      }
      return all ? 0 : 1;
    }
    if (*bode) {
      if (f_hi) bode_opt.f_hi = *f_hi;
      else if (bode_opt.numeric) bode_opt.f_hi = 1e3;
      const auto sys = bode_common.system();
      rgti::emit_bode(std::cout, tf_name, sys, bode_common.design(sys), bode_opt);
      return 0;
    }
    if (*fsm) {
      bool all = true;
      int rows_seen[7] = {};
      std::cout << "present,f_grid,f_chg,f_G,next,table_row,matches\n";
      for (const auto& r : rgti::fsm_check()) {
        std::cout << rgti::to_string(r.present) << ',' << rgti::level(r.flags.f_grid) << ','
                  << rgti::level(r.flags.f_chg) << ',' << rgti::level(r.flags.f_G) << ',' << rgti::to_string(r.next)
                  << ',' << (r.condition ? std::to_string(r.condition) : std::string("-")) << ','
                  << (r.matches ? "yes" : "NO") << '\n';
        all = all && r.matches;
        if (r.condition) ++rows_seen[r.condition];
      }
      for (int k = 1; k <= 6; ++k) all = all && rows_seen[k] > 0;
      std::cout << (all ? "all six table rows reproduced\n" : "MISMATCH against the transition table\n");
      return all ? 0 : 1;
    }
    if (*sweep) {
      const auto sys = sweep_common.system();
      std::cout << "irradiance,v_mpp,i_mpp,p_mpp\n";
      for (double g : irradiance) {
        const auto p = rgti::sweep_mpp(sys.pv, g, resolution);
        std::printf("%g,%.4f,%.6f,%.3f\n", g, p.v, p.i, p.p);
      }
      return 0;
    }
    if (*dump) {
      const auto sys = dump_common.system();
      if (what != "controls") rgti::write_system_params(std::cout, sys);
      if (what == "all") std::cout << '\n';
      if (what != "system") rgti::write_controls(std::cout, dump_common.design(sys));
      return 0;
    }
  } catch (const rgti::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
