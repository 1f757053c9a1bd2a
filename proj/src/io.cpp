#include "starkecho/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "starkecho/errors.hpp"

namespace starkecho {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void write_meta(std::ostream& os, const Metadata& meta) {
  for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

void write_trace_csv(std::ostream& os, const FieldTrace& trace, const Metadata& meta) {
  write_meta(os, meta);
  os << "# direction=" << (trace.direction == Direction::forward ? "forward" : "backward") << "\n";
  os << "# sample_step_us=" << format_number(trace.sample_step) << "\n";
  os << "t_us,in_re,in_im,out_re,out_im,out_abs\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& in = trace.boundary_in[k];
    const auto& out = trace.boundary_out[k];
    os << format_number(trace.times[k]) << ',' << format_number(in.real()) << ','
       << format_number(in.imag()) << ',' << format_number(out.real()) << ','
       << format_number(out.imag()) << ',' << format_number(std::abs(out)) << "\n";
  }
}

void write_snapshot_csv(std::ostream& os, const FieldTrace& trace, const SimGrid& grid,
                        const Metadata& meta) {
  write_meta(os, meta);
  os << "# z_min_mm=" << format_number(grid.z_min) << "\n";
  os << "# z_max_mm=" << format_number(grid.z_max) << "\n";
  os << "# n_z=" << grid.n_z << "\n";
  os << "t_us";
  for (int j = 0; j < grid.n_z; ++j) os << ",z" << j;
  os << "\n";
  for (std::size_t k = 0; k < trace.snapshots.size(); ++k) {
    const auto& s = trace.snapshots[k];
    if (s.size() != grid.n_z) throw Error(ErrorCode::GridMismatch, "snapshot size differs from n_z");
    os << format_number(trace.snapshot_times[k]);
    for (Eigen::Index j = 0; j < s.size(); ++j) os << ',' << format_number(std::abs(s[j]));
    os << "\n";
  }
}

std::string metrics_json(const EchoMetrics& m) {
  nlohmann::ordered_json j;
  j["peak_time_us"] = m.peak_time_us;
  j["echo_energy"] = m.echo_energy;
  j["efficiency"] = m.efficiency;
  j["fidelity"] = m.fidelity;
  j["tbp"] = m.tbp ? nlohmann::ordered_json(*m.tbp) : nlohmann::ordered_json(nullptr);
  return j.dump(2) + "\n";
}

void write_table_csv(std::ostream& os, const Table& table, const std::string& config_hash,
                     const Metadata& meta) {
  os << "# config_hash=" << config_hash << "\n";
  write_meta(os, meta);
  for (std::size_t c = 0; c < table.columns.size(); ++c) os << (c ? "," : "") << table.columns[c];
  os << ",error\n";
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < table.rows[r].size(); ++c)
      os << (c ? "," : "") << format_number(table.rows[r][c]);
    os << ',' << csv_field(table.errors[r]) << "\n";
  }
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["config_hash"] = m.config_hash;
  j["command"] = m.command;
  j["outputs"] = m.outputs;
  j["wall_time"] = m.wall_time;
  j["solver_resolution"] = {{"n_z", m.n_z}, {"n_detune", m.n_detune}, {"t_step", m.t_step}};
  j["resolved_config"] = m.resolved_config;
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error(ErrorCode::InvalidArgument, "failed writing " + path.string());
}

}  // namespace starkecho
