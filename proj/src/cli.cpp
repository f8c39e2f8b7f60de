#include "pdqn/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "pdqn/checkpoint.hpp"

namespace pdqn {

std::size_t worker_threads() {
  if (const char* env = std::getenv("PORTFOLIO_DQN_THREADS")) {
    char* end = nullptr;
    const auto n = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Universe load_universe(const RunConfig& config) {
  const auto series = build_series(load_prices(config.prices), load_fundamentals(config.fundamentals));
  return select_universe(series, config.selection, config.k, config.universe_seed);
}

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ",") + n;
  return out;
}

void write_manifest(const RunConfig& config, const Universe& universe,
                    const std::vector<EnsembleMember>& plan, const FeatureSpec& features,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# portfolio_dqn run manifest\n"
      << "toolVersion = " << kToolVersion << '\n'
      << "checkpointFormat = QNET1\n"
      << "featureFingerprint = " << features.fingerprint() << '\n'
      << "featureOrder = " << join_names(features.feature_names()) << '\n'
      << render_config(config);
  std::vector<std::string> tickers;
  for (const auto& a : universe.assets) tickers.push_back(a.ticker);
  out << "universe = " << join_names(tickers) << '\n';
  for (const auto& m : plan) {
    out << "member" << m.index << " = width " << m.hidden_width << ", seed " << m.seed << ", "
        << m.checkpoint.filename().string() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<TrainReport> cmd_train(const RunConfig& config, const std::filesystem::path& out_dir,
                                   std::ostream& log) {
  config.validate_for_run();
  const Universe universe = load_universe(config);
  const FeatureSpec features;
  const auto data = prepare_universe(universe, config.require_split(), features, config.convention);

  ensure_dir(out_dir);
  const auto plan = plan_ensemble(config.train, out_dir);
  write_manifest(config, universe, plan, features, out_dir / "manifest.txt");

  std::vector<std::unique_ptr<std::ofstream>> progress;
  for (const auto& m : plan) {
    const auto p = out_dir / ("train_log_member" + std::to_string(m.index) + "_h" +
                              std::to_string(m.hidden_width) + ".tsv");
    progress.push_back(std::make_unique<std::ofstream>(p, std::ios::trunc));
    if (!*progress.back()) throw IoError("cannot write " + p.string());
    *progress.back() << "iteration\tCR_v\tCR_v_best\twall_seconds\n";
  }

  const auto reports = train_ensemble(
      data, config.train, out_dir, worker_threads(), [&](const EnsembleMember& m) {
        TrainHooks h;
        h.progress = progress[m.index].get();
        return h;
      });
  for (const auto& r : reports) {
    log << "member width " << r.hidden_width << " seed " << r.seed << ": CR_v* = "
        << format_double(r.best_validation_return) << ", " << r.evaluation_curve.size()
        << " evaluations, " << r.gradient_steps << " gradient steps -> "
        << r.checkpoint_path.string() << '\n';
  }
  return reports;
}

std::vector<std::filesystem::path> cmd_backtest(const RunConfig& config,
                                                const std::filesystem::path& checkpoint_dir,
                                                const std::filesystem::path& out_dir,
                                                std::ostream& log) {
  config.validate_for_run();
  const FeatureSpec features;
  const auto plan = plan_ensemble(config.train, checkpoint_dir);

  Ensemble ensemble;
  ensemble.fingerprint = features.fingerprint();
  for (const auto& m : plan) {
    if (!std::filesystem::is_regular_file(m.checkpoint)) {
      throw CompatibilityError("missing checkpoint " + m.checkpoint.string());
    }
    auto c = load_checkpoint(m.checkpoint);
    if (c.fingerprint != features.fingerprint()) {
      throw CompatibilityError("checkpoint " + m.checkpoint.string() + " has feature fingerprint " +
                               std::to_string(c.fingerprint) + " but this pipeline produces " +
                               std::to_string(features.fingerprint()) + " (" +
                               join_names(features.feature_names()) + ")");
    }
    if (c.net.input_dim() != features.dimension()) {
      throw CompatibilityError("checkpoint " + m.checkpoint.string() + " expects " +
                               std::to_string(c.net.input_dim()) + " features, pipeline has " +
                               std::to_string(features.dimension()));
    }
    if (ensemble.members.empty()) {
      ensemble.scaler = c.scaler;
    } else if (c.scaler.means != ensemble.scaler.means || c.scaler.stds != ensemble.scaler.stds) {
      throw CompatibilityError("checkpoint " + m.checkpoint.string() +
                               " was fitted with a different scaler than its ensemble peers");
    }
    ensemble.members.push_back(std::move(c.net));
  }

  const Universe universe = load_universe(config);
  const auto data = prepare_universe(universe, config.require_split(), features, config.convention,
                                     ensemble.scaler);

  std::vector<ReportEntry> entries;
  const std::string type(to_string(config.selection));
  for (double bps : config.cost_levels) {
    const auto cost = CostModel::from_bps(bps);
    entries.push_back({bps, universe.assets.size(), type, run_backtest(ensemble, data.test, cost)});
    for (auto kind : {BenchmarkKind::BuyAndHold, BenchmarkKind::Momentum, BenchmarkKind::Reversion}) {
      entries.push_back({bps, universe.assets.size(), type, run_benchmark({kind, 5}, data.test, cost)});
    }
  }
  for (const auto& e : entries) {
    if (e.ledger.rows.empty()) throw DataError("test partition has no tradable periods");
  }
  const auto written = report(entries, out_dir);
  for (const auto& e : entries) {
    log << format_double(e.cost_bps) << " bps  " << e.ledger.strategy << ": "
        << format_double(cumulative_return(e.ledger)) << '\n';
  }
  return written;
}

std::vector<std::filesystem::path> cmd_synth(const RunConfig& config,
                                             const std::filesystem::path& out_dir) {
  const auto series = generate_synthetic(config.synth);
  ensure_dir(out_dir);
  const auto prices = out_dir / "prices.csv";
  const auto fundamentals = out_dir / "fundamentals.csv";
  write_prices_csv(series, prices);
  write_fundamentals_csv(series, fundamentals);
  return {prices, fundamentals};
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deep Q-learning portfolio trading: train, backtest, synthesize data"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_dir;
  std::optional<std::uint64_t> seed;

  auto* train = app.add_subcommand("train", "Train the agent ensemble");
  train->add_option("--config", config_path, "Configuration file")->required();
  train->add_option("--out", out_dir, "Output directory (overrides `out`)");
  train->add_option("--seed", seed, "Seed (overrides `seed`)");

  auto* backtest = app.add_subcommand("backtest", "Backtest checkpoints on the test partition");
  backtest->add_option("--config", config_path, "Configuration file")->required();
  backtest->add_option("--checkpoints", checkpoint_dir, "Checkpoint directory")->required();
  backtest->add_option("--out", out_dir, "Output directory (overrides `out`)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic price/fundamental panel");
  synth->add_option("--config", config_path, "Configuration file")->required();
  synth->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return 1;
  }

  try {
    std::map<std::string, std::string> overrides;
    if (seed) overrides["seed"] = std::to_string(*seed);
    auto config = load_run_config(config_path, overrides);
    const std::filesystem::path dest = out_dir.empty() ? config.output_dir : std::filesystem::path(out_dir);
    if (train->parsed()) {
      cmd_train(config, dest, out);
    } else if (backtest->parsed()) {
      cmd_backtest(config, checkpoint_dir, dest, out);
    } else {
      for (const auto& p : cmd_synth(config, dest)) out << "wrote " << p.string() << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace pdqn
