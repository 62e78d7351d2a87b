// Command-line front end for the cvqkd library: evaluate collective-attack
// key rates, solve and sweep tolerable-excess-noise thresholds, run the
// Monte-Carlo estimation pipeline, and run the randomized verification
// suites. Emits CSV with '#' metadata comment lines; identical inputs
// (including seeds) produce byte-identical output.
//
// Exit codes: 0 success, 1 domain error, 2 usage error, 3 verification
// violation.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cvqkd/checks.hpp"
#include "cvqkd/csv.hpp"
#include "cvqkd/keyrate.hpp"
#include "cvqkd/simulation.hpp"
#include "cvqkd/version.hpp"

namespace {

using namespace cvqkd;

std::vector<Protocol> parse_protocols(const std::string& arg) {
  std::vector<Protocol> out;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "all") {
      const auto all = Protocol::all();
      out.insert(out.end(), all.begin(), all.end());
    } else if (!item.empty()) {
      out.push_back(Protocol::parse(item));
    }
  }
  if (out.empty()) throw std::invalid_argument("no protocol selected");
  return out;
}

std::vector<ReconciliationDirection> parse_directions(const std::string& arg) {
  std::vector<ReconciliationDirection> out;
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_direction(item));
  }
  if (out.empty()) throw std::invalid_argument("no reconciliation direction selected");
  return out;
}

std::vector<double> parse_grid(const std::string& arg) {
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(arg);
  if (!(ss >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0.0)) {
    throw std::invalid_argument("grid must have the form lo:hi:step, got '" + arg + "'");
  }
  std::vector<double> grid;
  const int n = static_cast<int>(std::round((hi - lo) / step));
  for (int i = 0; i <= n; ++i) {
    const double t = lo + i * step;
    if (t <= hi + 0.5 * step) grid.push_back(t);
  }
  return grid;
}

// Plain key=value configuration: '#' comments and blank lines ignored.
// Values are injected as synthetic long options for keys the command line
// does not already carry, so flags always win.
std::vector<std::string> apply_config_file(const std::vector<std::string>& args) {
  std::string path;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ParseError("--config needs a file path", 2);
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (path.empty()) return out;

  std::ifstream file(path);
  if (!file) throw std::runtime_error("cannot read config file '" + path + "'");
  const auto already_given = [&](const std::string& key) {
    const std::string flag = "--" + key;
    for (const std::string& a : out) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::string line;
  int lineno = 0;
  while (std::getline(file, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq <= first) {
      throw CLI::ParseError("config line " + std::to_string(lineno) + " is not key=value", 2);
    }
    const auto key_end = line.find_last_not_of(" \t", eq - 1);
    std::string key = line.substr(first, key_end - first + 1);
    const auto val_begin = line.find_first_not_of(" \t", eq + 1);
    std::string value =
        val_begin == std::string::npos ? std::string() : line.substr(val_begin);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t' || value.back() == '\r')) {
      value.pop_back();
    }
    if (already_given(key)) continue;
    if (value == "true") {
      out.push_back("--" + key);
    } else {
      out.push_back("--" + key + "=" + value);
    }
  }
  return out;
}

// Stream sink: '-' means stdout.
class OutputFile {
 public:
  explicit OutputFile(const std::string& path) {
    if (path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw std::runtime_error("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void write_threshold_csv(const ThresholdTable& table, const std::vector<double>& grid,
                         const std::vector<Protocol>& protocols,
                         const std::vector<ReconciliationDirection>& directions, double beta,
                         const SolverOptions& opts, std::ostream& os) {
  os << "# cvqkd thresholds schema 1 (tool " << kVersion << ")\n";
  os << "# beta=" << format_double(beta) << " rate_tol=" << format_double(opts.rate_tol)
     << " eps_tol=" << format_double(opts.epsilon_tol) << "\n";
  os << "# epsilon_max in shot-noise units referred to the channel input; nan marks a failed cell\n";
  std::size_t unconverged = 0, failed = 0;
  for (const ThresholdCell& cell : table.cells) {
    if (!cell.error.empty()) {
      ++failed;
    } else if (!cell.converged) {
      ++unconverged;
    }
  }
  os << "# cells=" << table.cells.size() << " unconverged=" << unconverged
     << " failed=" << failed << "\n";
  os << "T";
  for (const Protocol& p : protocols) {
    for (ReconciliationDirection d : directions) os << ',' << p.name() << ':' << direction_name(d);
  }
  os << '\n';
  const std::size_t row_cells = protocols.size() * directions.size();
  for (std::size_t ti = 0; ti < grid.size(); ++ti) {
    os << format_double(grid[ti]);
    for (std::size_t k = 0; k < row_cells; ++k) {
      const ThresholdCell& cell = table.cells[ti * row_cells + k];
      os << ',' << format_double(cell.epsilon_max, "%.8g");
    }
    os << '\n';
  }
}

void print_key_rate(const KeyRateResult& r, std::ostream& os) {
  os << "I_ab=" << format_double(r.information_bits) << "\n";
  os << "chi_E=" << format_double(r.eve_holevo) << "\n";
  os << "K=" << format_double(r.key_rate) << "\n";
  os << "converged=" << (r.converged ? 1 : 0) << " V_used=" << format_double(r.v_used) << "\n";
}

void print_check(const CheckReport& report, std::ostream& os) {
  os << report.name << ": trials=" << report.trials << " violations=" << report.violations
     << " worst_margin=" << format_double(report.worst_margin, "%.6g")
     << " (trial " << report.worst_trial << ") tolerance=" << format_double(report.tolerance)
     << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("cvqkd ") + kVersion +
               " - Gaussian CV-QKD secret key rates under optimal collective attacks"};
  app.require_subcommand(1);

  // Shared option state.
  std::string protocol_arg = "all";
  std::string direction_arg = "dr,rr";
  double transmittance = 1.0;
  double excess_noise = 0.0;
  double variance = 2.0;
  double beta = 1.0;
  bool asymptotic = false;
  SolverOptions solver;
  std::string grid_arg = "0.05:0.95:0.05";
  std::string out_path = "-";
  int jobs = 0;
  std::uint64_t seed = 1;
  std::uint64_t rounds = 100000;
  double fraction = 1.0;
  int trials = 200;
  double nu_max = 4.0;

  const auto add_channel = [&](CLI::App* cmd) {
    cmd->add_option("--T", transmittance, "Channel transmittance in (0,1]")->capture_default_str();
    cmd->add_option("--eps", excess_noise, "Input-referred excess noise (shot-noise units)")
        ->capture_default_str();
  };
  const auto add_solver = [&](CLI::App* cmd) {
    cmd->add_option("--rate-tol", solver.rate_tol, "Modulation-ladder convergence tolerance")
        ->capture_default_str();
    cmd->add_option("--eps-tol", solver.epsilon_tol, "Bisection tolerance on epsilon")
        ->capture_default_str();
  };

  std::string config_path;  // consumed by apply_config_file; registered for help only
  const auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Read defaults from a key=value file (flags win)");
  };

  CLI::App* eval = app.add_subcommand("eval", "Evaluate the key rate at one parameter point");
  add_config(eval);
  eval->add_option("--protocol", protocol_arg, "Protocol name (or 'all')")->capture_default_str();
  eval->add_option("--direction", direction_arg, "Reconciliation: dr, rr or dr,rr")
      ->capture_default_str();
  add_channel(eval);
  eval->add_option("--V", variance, "EPR modulation variance (>= 1)")->capture_default_str();
  eval->add_option("--beta", beta, "Reconciliation efficiency in [0,1]")->capture_default_str();
  eval->add_flag("--asymptotic", asymptotic, "Take the infinite-modulation limit instead of --V");
  bool quantum_bob = false;
  eval->add_flag("--quantum-bob", quantum_bob,
                 "Rate against a quantum-limited Bob (chi_aB - chi_aE, DR semantics)");
  add_solver(eval);

  CLI::App* threshold =
      app.add_subcommand("threshold", "Tolerable excess noise at a single transmittance");
  add_config(threshold);
  threshold->add_option("--protocol", protocol_arg, "Protocol names, comma separated, or 'all'")
      ->capture_default_str();
  threshold->add_option("--direction", direction_arg, "Directions: dr, rr or dr,rr")
      ->capture_default_str();
  threshold->add_option("--T", transmittance, "Channel transmittance in (0,1]")
      ->capture_default_str();
  threshold->add_option("--beta", beta, "Reconciliation efficiency in [0,1]")
      ->capture_default_str();
  threshold->add_option("--out", out_path, "Output CSV path ('-' for stdout)")
      ->capture_default_str();
  add_solver(threshold);

  CLI::App* sweep = app.add_subcommand("sweep", "Tolerable excess noise over a transmittance grid");
  add_config(sweep);
  sweep->add_option("--grid", grid_arg, "Transmittance grid lo:hi:step")->capture_default_str();
  sweep->add_option("--protocol", protocol_arg, "Protocol names, comma separated, or 'all'")
      ->capture_default_str();
  sweep->add_option("--direction", direction_arg, "Directions: dr, rr or dr,rr")
      ->capture_default_str();
  sweep->add_option("--beta", beta, "Reconciliation efficiency in [0,1]")->capture_default_str();
  sweep->add_option("--jobs", jobs, "Worker threads (0 = hardware)")->capture_default_str();
  sweep->add_option("--out", out_path, "Output CSV path ('-' for stdout)")->capture_default_str();
  add_solver(sweep);

  CLI::App* simulate =
      app.add_subcommand("simulate", "Monte-Carlo pipeline: sample, sift, estimate, rate");
  add_config(simulate);
  simulate->add_option("--protocol", protocol_arg, "Protocol name")->required();
  simulate->add_option("--direction", direction_arg, "Reconciliation: dr or rr")
      ->capture_default_str();
  add_channel(simulate);
  simulate->add_option("--V", variance, "EPR modulation variance (>= 1)")->capture_default_str();
  simulate->add_option("--beta", beta, "Reconciliation efficiency in [0,1]")
      ->capture_default_str();
  simulate->add_option("--n", rounds, "Number of rounds")->capture_default_str();
  simulate->add_option("--seed", seed, "RNG seed")->capture_default_str();
  simulate->add_option("--fraction", fraction, "Estimation sample fraction in (0,1]")
      ->capture_default_str();
  simulate->add_option("--out", out_path, "Batch CSV path ('-' for stdout)")
      ->capture_default_str();

  CLI::App* verify = app.add_subcommand(
      "verify", "Randomized verification of the entropic inequalities behind the rates");
  add_config(verify);
  verify->add_option("--seed", seed, "RNG seed")->capture_default_str();
  verify->add_option("--trials", trials, "Trials for the main suites")->capture_default_str();
  verify->add_option("--nu-max", nu_max, "Williamson spectrum upper bound for random states")
      ->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = apply_config_file(args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (eval->parsed()) {
      const auto protocols = parse_protocols(protocol_arg);
      const auto directions = parse_directions(direction_arg);
      std::cout << "# cvqkd eval (tool " << kVersion << ")\n";
      for (const Protocol& p : protocols) {
        for (ReconciliationDirection d : directions) {
          std::cout << "protocol=" << p.name() << " direction=" << direction_name(d)
                    << " T=" << format_double(transmittance)
                    << " eps=" << format_double(excess_noise) << " beta=" << format_double(beta);
          KeyRateResult r;
          if (quantum_bob) {
            std::cout << " V=" << format_double(variance) << " quantum-bob\n";
            r = quantum_bob_rate(p, ModulationVariance(variance),
                                 ChannelParams(transmittance, excess_noise));
          } else if (asymptotic) {
            std::cout << " V=asymptotic\n";
            r = asymptotic_key_rate(p, d, ChannelParams(transmittance, excess_noise), beta,
                                    solver);
          } else {
            std::cout << " V=" << format_double(variance) << "\n";
            r = secret_key_rate(KeyRateParams(p, d, ModulationVariance(variance),
                                              ChannelParams(transmittance, excess_noise), beta));
          }
          print_key_rate(r, std::cout);
        }
      }
      return 0;
    }

    if (threshold->parsed() || sweep->parsed()) {
      const auto protocols = parse_protocols(protocol_arg);
      const auto directions = parse_directions(direction_arg);
      const std::vector<double> grid =
          threshold->parsed() ? std::vector<double>{transmittance} : parse_grid(grid_arg);
      const int workers =
          jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
      const ThresholdTable table =
          sweep_thresholds(grid, protocols, directions, beta, workers, solver);
      OutputFile out(out_path);
      write_threshold_csv(table, grid, protocols, directions, beta, solver, out.stream());
      return 0;
    }

    if (simulate->parsed()) {
      const Protocol p = Protocol::parse(protocol_arg);
      const auto directions = parse_directions(direction_arg);
      const ChannelParams ch(transmittance, excess_noise);
      const ModulationVariance v(variance);
      const SampleBatch raw = simulate_protocol(p, ch, v, rounds, seed);
      const SampleBatch sifted = sift(raw);
      {
        OutputFile out(out_path);
        write_batch_csv(sifted, out.stream());
      }
      const EstimatedCovariance est = estimate_covariance(sifted, fraction);
      std::cout << "# cvqkd simulate (tool " << kVersion << ")\n";
      std::cout << "protocol=" << p.name() << " T=" << format_double(transmittance)
                << " eps=" << format_double(excess_noise) << " V=" << format_double(variance)
                << " n=" << rounds << " seed=" << seed << " retained=" << sifted.size()
                << " estimation_rounds=" << est.samples_used << "\n";
      std::cout << "estimated_gamma:\n";
      for (int i = 0; i < 4; ++i) {
        std::cout << " ";
        for (int j = 0; j < 4; ++j) std::cout << ' ' << format_double(est.gamma(i, j), "%.8g");
        std::cout << "\n";
      }
      std::cout << "standard_errors:\n";
      for (int i = 0; i < 4; ++i) {
        std::cout << " ";
        for (int j = 0; j < 4; ++j)
          std::cout << ' ' << format_double(est.standard_errors(i, j), "%.3g");
        std::cout << "\n";
      }
      std::cout << "physical=" << (est.physical ? 1 : 0) << "\n";
      for (ReconciliationDirection d : directions) {
        std::cout << "direction=" << direction_name(d) << " beta=" << format_double(beta) << "\n";
        const KeyRateResult estimated = key_rate_from_samples(sifted, d, beta, fraction);
        std::cout << "estimated rate:\n";
        print_key_rate(estimated, std::cout);
        const KeyRateResult analytic = secret_key_rate(KeyRateParams(p, d, v, ch, beta));
        std::cout << "analytic rate (channel model):\n";
        print_key_rate(analytic, std::cout);
      }
      return 0;
    }

    // verify
    RandomStateSpec spec;
    spec.n_modes = 2;
    spec.nu_max = nu_max;
    spec.seed = seed;
    const CheckReport reports[] = {
        check_holevo_inequality(trials, spec),
        check_super_additivity(trials, spec),
        check_super_additivity_products(std::max(1, trials / 4), spec),
        check_gaussification_invariance(std::max(1, trials / 2), spec),
    };
    std::cout << "# cvqkd verify (tool " << kVersion << ") seed=" << seed << " trials=" << trials
              << " nu_max=" << format_double(nu_max) << "\n";
    bool ok = true;
    std::string summary = "summary {";
    for (const CheckReport& r : reports) {
      print_check(r, std::cout);
      ok = ok && r.passed();
      if (summary.size() > 9) summary += ",";
      summary += "\"" + r.name + "\":{\"trials\":" + std::to_string(r.trials) +
                 ",\"violations\":" + std::to_string(r.violations) +
                 ",\"worst_margin\":" + format_double(r.worst_margin, "%.6g") + "}";
    }
    summary += "}";
    std::cout << summary << "\n";
    std::cout << (ok ? "all checks passed" : "CHECK VIOLATIONS DETECTED") << "\n";
    return ok ? 0 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
