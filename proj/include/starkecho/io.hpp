// io.hpp - CSV and JSON artifacts.
//
// CSV: comma separated, one header row, '#'-prefixed metadata lines first.
// Numbers are written with 17 significant digits so reruns are byte-identical.
#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "starkecho/analysis.hpp"
#include "starkecho/model.hpp"
#include "starkecho/protocol.hpp"
#include "starkecho/transport.hpp"

namespace starkecho {

using Metadata = std::vector<std::pair<std::string, std::string>>;

// Columns: t_us, in_re, in_im, out_re, out_im, out_abs
void write_trace_csv(std::ostream& os, const FieldTrace& trace, const Metadata& meta = {});

// |Omega(z, t)|: one row per snapshot time, one column per grid node.
void write_snapshot_csv(std::ostream& os, const FieldTrace& trace, const SimGrid& grid,
                        const Metadata& meta = {});

// Flat object with exactly peak_time_us, echo_energy, efficiency, fidelity,
// tbp (null when absent).
std::string metrics_json(const EchoMetrics& m);

// Header row of column names plus an "error" column; '#' line with the
// config hash.
void write_table_csv(std::ostream& os, const Table& table, const std::string& config_hash,
                     const Metadata& meta = {});

struct RunManifest {
  std::string config_hash;
  std::string command;
  std::vector<std::string> outputs;
  double wall_time = 0.0;  // s
  int n_z = 0;
  int n_detune = 0;
  double t_step = 0.0;
  std::string resolved_config;
};

std::string manifest_json(const RunManifest& m);

std::string format_number(double v);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace starkecho
