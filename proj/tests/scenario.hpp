#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "linkshift/run.hpp"
#include "linkshift/synth.hpp"

namespace scenario {

using namespace linkshift;

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Scenario {
  synth::Topology topo = synth::default_topology();
  PrefixTable table = topo.prefix_table();
  PipelineConfig cfg;
  std::string corpus;

  Scenario(const std::string& script_text, std::int64_t bins, std::uint64_t seed = 1) {
    cfg.bins.width = topo.params.bin_width;
    std::istringstream st(script_text);
    const auto script = synth::parse_script(st, topo);
    std::ostringstream out;
    synth::Generator(topo, script, seed).write(out, bins);
    corpus = out.str();
  }

  BinIndex bin(std::int64_t relative) const { return bin_index(topo.params.start, cfg.bins) + relative; }
  IpAddress addr(const char* router) const { return topo.routers[*topo.router_index(router)].address; }
};

struct Result {
  std::string output;
  RunStats stats;
  AlarmLog log;
  Checkpoint state;
};

inline Result run(const std::string& corpus, const PrefixTable& table, const PipelineConfig& cfg,
                  const RunOptions& opts = {}) {
  Result r;
  std::istringstream in(corpus);
  std::ostringstream out;
  r.stats = run_stream(in, table, cfg, out, opts, &r.state);
  r.output = out.str();
  std::istringstream back(r.output);
  r.log = read_alarms(back, cfg.bins);
  return r;
}

inline Result run(const Scenario& s, const RunOptions& opts = {}) { return run(s.corpus, s.table, s.cfg, opts); }

}  // namespace scenario
