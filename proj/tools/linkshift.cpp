// linkshift: delay-change and forwarding-anomaly detection on traceroutes.
//
//   linkshift run           analyse a traceroute stream
//   linkshift synth         generate a synthetic traceroute corpus
//   linkshift magnitude     per-AS severity series from an alarm file
//   linkshift characterize  per-AS events with TF-IDF prefixes from an alarm file
//   linkshift mindetect     shortest detectable event for a probing setup

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "linkshift/linkshift.hpp"

namespace {

using namespace linkshift;

// "-" selects stdin / stdout.
class Input {
 public:
  explicit Input(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ifstream>(path);
      if (!*file_) throw std::runtime_error("cannot open " + path);
    }
  }
  std::istream& stream() { return file_ ? *file_ : std::cin; }

 private:
  std::unique_ptr<std::ifstream> file_;
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw std::runtime_error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct RunArgs {
  std::string input = "-";
  std::string pfx2as;
  std::string output = "-";
  std::string series;
  std::string state;
  std::int64_t bin_width = 3600;
  std::size_t min_as = 3;
  double entropy_threshold = 0.5;
  std::uint64_t seed = 0;
  double alpha = 0.01;
  double min_diff_ms = 1.0;
  double z = 1.96;
  std::size_t min_samples = 9;
  double tau = -0.25;
  double fw_alpha = 0.01;
  std::size_t window = 168;
  std::size_t topk = 10;
  double event_threshold = 5.0;
  bool peak_only = false;
  unsigned threads = 1;
  double probe_rate = 0.0;
};

PipelineConfig to_config(const RunArgs& a) {
  PipelineConfig cfg;
  cfg.bins.width = a.bin_width;
  cfg.diversity = {a.min_as, a.entropy_threshold};
  cfg.delay = {a.z, a.alpha, a.min_diff_ms, a.min_samples};
  cfg.tau = a.tau;
  cfg.fw_alpha = a.fw_alpha;
  cfg.seed = a.seed;
  cfg.aggregate = {a.window, a.event_threshold, a.peak_only ? EventRange::PeakOnly : EventRange::Contiguous, a.topk};
  cfg.threads = a.threads;
  if (a.probe_rate > 0.0) cfg.probe_rate = a.probe_rate;
  return cfg;
}

int cmd_run(const RunArgs& a) {
  const auto cfg = to_config(a);
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  }
  if (a.min_as < 3) std::cerr << "warning: --min-as below 3 weakens the return-path diversity guarantee\n";

  const auto table = PrefixTable::load(a.pfx2as);
  RunOptions opts;
  if (!a.state.empty() && std::filesystem::exists(a.state)) opts.resume = load(a.state);
  opts.flush_events = a.state.empty();
  std::optional<Output> series;
  if (!a.series.empty()) {
    series.emplace(a.series);
    opts.series = &series->stream();
  }
  Input in(a.input);
  Output out(a.output);
  Checkpoint final_state;
  RunStats stats;
  try {
    stats = run_stream(in.stream(), table, cfg, out.stream(), opts, &final_state);
  } catch (const IngestError& e) {
    std::cerr << "fatal ingestion error: " << e.what() << '\n';
    return 1;
  }
  out.stream().flush();
  if (!a.state.empty()) save(final_state, a.state);

  std::cerr << "records " << stats.records << ", skipped lines " << stats.skipped_lines;
  if (stats.skipped_lines > 0) std::cerr << " (first at line " << stats.first_skipped_line << ")";
  std::cerr << ", late records " << stats.late_records << ", bins " << stats.bins << ", delay alarms "
            << stats.delay_alarms << ", forwarding alarms " << stats.forwarding_alarms << ", events " << stats.events
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect delay changes and forwarding anomalies in traceroute data"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Analyse a traceroute stream");
  run_cmd->add_option("--input", run.input, "Traceroute results, one JSON document per line ('-' for stdin)");
  run_cmd->add_option("--pfx2as", run.pfx2as, "Prefix-to-AS table (prefix<TAB>length<TAB>asn)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--output", run.output, "Alarm and event records ('-' for stdout)");
  run_cmd->add_option("--series", run.series, "Per-AS magnitude series output file");
  run_cmd->add_option("--state", run.state, "Checkpoint file to resume from and update");
  run_cmd->add_option("--bin-width", run.bin_width, "Time bin width in seconds")->capture_default_str();
  run_cmd->add_option("--min-as", run.min_as, "Minimum distinct probe ASes per link")->capture_default_str();
  run_cmd->add_option("--entropy-threshold", run.entropy_threshold, "Minimum AS entropy per link")
      ->capture_default_str();
  run_cmd->add_option("--seed", run.seed, "Seed for the diversity filter")->capture_default_str();
  run_cmd->add_option("--alpha", run.alpha, "Smoothing factor of delay references")->capture_default_str();
  run_cmd->add_option("--min-diff-ms", run.min_diff_ms, "Smallest reported median shift (ms)")
      ->capture_default_str();
  run_cmd->add_option("--z", run.z, "Confidence coefficient of the median interval")->capture_default_str();
  run_cmd->add_option("--min-samples", run.min_samples, "Samples per bin required to raise a delay alarm")
      ->capture_default_str();
  run_cmd->add_option("--tau", run.tau, "Correlation threshold for forwarding anomalies")->capture_default_str();
  run_cmd->add_option("--fw-alpha", run.fw_alpha, "Smoothing factor of forwarding references")
      ->capture_default_str();
  run_cmd->add_option("--window", run.window, "Magnitude sliding window (bins)")->capture_default_str();
  run_cmd->add_option("--topk", run.topk, "Prefixes listed per event")->capture_default_str();
  run_cmd->add_option("--event-threshold", run.event_threshold, "|magnitude| that opens an event")
      ->capture_default_str();
  run_cmd->add_flag("--peak-only", run.peak_only, "Characterize events by their peak bin only");
  run_cmd->add_option("--threads", run.threads, "Worker threads for per-link stages")->capture_default_str();
  run_cmd->add_option("--probe-rate", run.probe_rate,
                      "Declared traceroutes per hour per probe; rejects bins too short to detect anything");

  std::string topology_path, script_path, synth_out = "-", pfx_out, topo_out;
  std::int64_t synth_bins = 48;
  std::uint64_t synth_seed = 1;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic traceroute corpus");
  synth_cmd->add_option("--topology", topology_path, "Topology file (built-in topology when omitted)")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--script", script_path, "Anomaly script")->check(CLI::ExistingFile);
  synth_cmd->add_option("--bins", synth_bins, "Number of bins to generate")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--output", synth_out, "Records output ('-' for stdout)");
  synth_cmd->add_option("--pfx2as-out", pfx_out, "Write the topology's prefix table here");
  synth_cmd->add_option("--topology-out", topo_out, "Write the topology in file form here");

  std::string alarms_path, agg_pfx, agg_out = "-";
  std::int64_t agg_bin_width = 3600;
  std::size_t agg_window = 168, agg_topk = 10;
  double agg_threshold = 5.0;
  bool agg_peak_only = false;
  std::int64_t agg_asn = -1;
  std::optional<Timestamp> agg_start, agg_end;
  auto* mag_cmd = app.add_subcommand("magnitude", "Per-AS severity series and magnitudes from alarms");
  auto* char_cmd = app.add_subcommand("characterize", "Per-AS events and their characteristic prefixes");
  for (auto* cmd : {mag_cmd, char_cmd}) {
    cmd->add_option("--alarms", alarms_path, "Alarm records written by 'run'")->required()->check(CLI::ExistingFile);
    cmd->add_option("--pfx2as", agg_pfx, "Prefix-to-AS table")->required()->check(CLI::ExistingFile);
    cmd->add_option("--output", agg_out, "Output ('-' for stdout)");
    cmd->add_option("--bin-width", agg_bin_width, "Time bin width in seconds")->capture_default_str();
    cmd->add_option("--window", agg_window, "Sliding window (bins)")->capture_default_str();
    cmd->add_option("--start", agg_start, "First observed time (Unix seconds); defaults to the first alarm");
    cmd->add_option("--end", agg_end, "Last observed time (Unix seconds); defaults to the last alarm");
  }
  char_cmd->add_option("--topk", agg_topk, "Prefixes listed per event")->capture_default_str();
  char_cmd->add_option("--event-threshold", agg_threshold, "|magnitude| that opens an event")->capture_default_str();
  char_cmd->add_flag("--peak-only", agg_peak_only, "Characterize events by their peak bin only");
  char_cmd->add_option("--asn", agg_asn, "Restrict to one AS");

  double md_rate = 2.0, md_probes = 3.0, md_bin = 1.0;
  auto* md_cmd = app.add_subcommand("mindetect", "Shortest detectable delay event");
  md_cmd->add_option("--rate", md_rate, "Traceroutes per hour per probe")->capture_default_str();
  md_cmd->add_option("--probes", md_probes, "Probes monitoring the link")->capture_default_str();
  md_cmd->add_option("--bin-hours", md_bin, "Time bin in hours")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(run);

    if (*synth_cmd) {
      synth::Topology topo = synth::default_topology();
      if (!topology_path.empty()) {
        std::ifstream in(topology_path);
        topo = synth::parse_topology(in);
      }
      synth::AnomalyScript script;
      if (!script_path.empty()) {
        std::ifstream in(script_path);
        script = synth::parse_script(in, topo);
      }
      if (!pfx_out.empty()) {
        std::ofstream out(pfx_out);
        topo.prefix_table().write(out);
      }
      if (!topo_out.empty()) {
        std::ofstream out(topo_out);
        synth::write_topology(out, topo);
      }
      Output out(synth_out);
      synth::Generator(topo, script, synth_seed).write(out.stream(), synth_bins);
      return 0;
    }

    if (*mag_cmd || *char_cmd) {
      const auto table = PrefixTable::load(agg_pfx);
      BinConfig bins;
      bins.width = agg_bin_width;
      Input in(alarms_path);
      const auto log = read_alarms(in.stream(), bins);
      if (log.skipped > 0) std::cerr << "skipped " << log.skipped << " unreadable alarm lines\n";
      BinSpan span;
      if (agg_start) span.first = bin_index(*agg_start, bins);
      if (agg_end) span.last = bin_index(*agg_end, bins);
      Output out(agg_out);
      if (*mag_cmd) {
        write_magnitudes(log, table, bins, agg_window, out.stream(), span);
      } else {
        AggregateConfig cfg{agg_window, agg_threshold, agg_peak_only ? EventRange::PeakOnly : EventRange::Contiguous,
                            agg_topk};
        std::optional<Asn> only;
        if (agg_asn >= 0) only = static_cast<Asn>(agg_asn);
        for (const auto& e : characterize_log(log, table, cfg, only, span)) write_line(out.stream(), to_json(e, bins));
      }
      return 0;
    }

    if (*md_cmd) {
      const double hours = min_detectable_event(md_rate, md_probes, md_bin);
      std::printf("minimum usable bin: %.4f h\nshortest detectable event: %.4f h (%.1f min)\n",
                  min_usable_bin_hours(md_rate, md_probes), hours, hours * 60.0);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
