#include "starkecho/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include "starkecho/errors.hpp"
#include "starkecho/units.hpp"

namespace starkecho {

namespace pt = boost::property_tree;

namespace {

struct SectionKeys {
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

const std::map<std::string, SectionKeys>& schema() {
  static const std::map<std::string, SectionKeys> s = {
      {"grid", {{"z_min", "z_max", "n_z", "t_step"}, {"n_detune", "detune_half_width", "c_medium"}}},
      {"feature", {{"shape", "width", "peak_optical_depth"}, {"center", "homogeneous_t2"}}},
      {"gradient", {{"broadening_rate", "voltage"}, {"polarity"}}},
      {"coupling", {{"calibration"}, {"optical_depth", "value"}}},
      {"pulse", {{"shape", "duration", "area"}, {"carrier_detuning", "start_time"}}},
      {"protocol", {{"mode", "tau"}, {"flip_ramp", "fid_record", "delays", "areas"}}},
  };
  return s;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = boost::algorithm::trim_copy(text);
  if (t == "inf" || t == "infinity") {
    out = std::numeric_limits<double>::infinity();
    return true;
  }
  try {
    std::size_t used = 0;
    out = std::stod(t, &used);
    return used == t.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

class Reader {
 public:
  Reader(const pt::ptree& tree, const std::set<std::string>& from_file,
         std::vector<std::string>& errors)
      : tree_(tree), from_file_(from_file), errors_(errors) {}

  std::optional<std::string> text(const std::string& section, const std::string& key) {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(section + "." + key));
    if (!v) {
      const auto& req = schema().at(section).required;
      if (from_file_.count(section) && std::find(req.begin(), req.end(), key) != req.end())
        fail(section, key, "missing required key");
      return std::nullopt;
    }
    return boost::algorithm::trim_copy(*v);
  }

  void number(const std::string& section, const std::string& key, double& target) {
    const auto v = text(section, key);
    if (!v) return;
    double d;
    if (!parse_double(*v, d)) {
      fail(section, key, "not a number: '" + *v + "'");
      return;
    }
    target = d;
  }

  void integer(const std::string& section, const std::string& key, int& target) {
    double d = target;
    const std::size_t before = errors_.size();
    number(section, key, d);
    if (errors_.size() != before) return;
    if (d != std::floor(d) || std::abs(d) > 1e9) {
      fail(section, key, "must be an integer");
      return;
    }
    target = static_cast<int>(d);
  }

  std::vector<double> list(const std::string& section, const std::string& key,
                           std::vector<double> fallback) {
    const auto v = text(section, key);
    if (!v) return fallback;
    try {
      if (v->find(':') != std::string::npos) return parse_range(*v);
      std::vector<std::string> parts;
      boost::algorithm::split(parts, *v, boost::is_any_of(","));
      std::vector<double> out;
      for (const auto& p : parts) {
        double d;
        if (!parse_double(p, d)) throw Error(ErrorCode::InvalidArgument, "bad list entry '" + p + "'");
        out.push_back(d);
      }
      return out;
    } catch (const Error& e) {
      fail(section, key, e.what());
      return fallback;
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    return tree_.get_optional<std::string>(pt::ptree::path_type(section + "." + key)).has_value();
  }

  void fail(const std::string& section, const std::string& key, const std::string& what) {
    errors_.push_back(section + "." + key + ": " + what);
  }

 private:
  const pt::ptree& tree_;
  const std::set<std::string>& from_file_;
  std::vector<std::string>& errors_;
};

// Detuning window and lattice: at least 1500 kHz and 1.2 times the largest
// Stark shift beyond the feature, 64 lattice points per feature width.
void size_detuning_lattice(SimGrid& grid, const SpectralFeature& f, const StarkGradient& g,
                           bool has_width, bool has_count) {
  const double reach_khz =
      std::abs(f.center) + units::rad_per_us_to_khz(f.half_extent()) + 1.2 * std::abs(g.half_shift());
  if (!has_width)
    grid.detune_half_width = units::khz_to_rad_per_us(std::max(1500.0, reach_khz));
  if (!has_count) {
    const double spacing = units::khz_to_rad_per_us(f.width) / 64.0;
    grid.n_detune = static_cast<int>(std::ceil(2.0 * grid.detune_half_width / spacing - 1e-9)) + 1;
  }
}

}  // namespace

std::vector<double> parse_range(const std::string& spec) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, spec, boost::is_any_of(":"));
  double a, b, n;
  if (parts.size() != 3 || !parse_double(parts[0], a) || !parse_double(parts[1], b) ||
      !parse_double(parts[2], n) || n < 1 || n != std::floor(n))
    throw Error(ErrorCode::InvalidArgument, "range must be start:stop:count, got '" + spec + "'");
  const int count = static_cast<int>(n);
  std::vector<double> out;
  for (int k = 0; k < count; ++k) out.push_back(count == 1 ? a : a + (b - a) * k / (count - 1));
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::InvalidArgument, "SHA-256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(buf, sizeof buf, "%02x", digest[k]);
    hex += buf;
  }
  return hex;
}

ConfigResult validate_config(const std::string& text,
                             const std::map<std::string, std::string>& overrides) {
  ConfigResult result;
  auto& errors = result.errors;
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    errors.push_back("line " + std::to_string(e.line()) + ": " + e.message());
    return result;
  }

  std::set<std::string> from_file;
  for (const auto& [name, sec] : tree) {
    if (sec.empty() && !sec.data().empty()) {
      errors.push_back(name + ": key outside any section");
      continue;
    }
    const auto it = schema().find(name);
    if (it == schema().end()) {
      errors.push_back(name + ": unknown section");
      continue;
    }
    from_file.insert(name);
    for (const auto& [key, value] : sec) {
      const auto& k = it->second;
      if (std::find(k.required.begin(), k.required.end(), key) == k.required.end() &&
          std::find(k.optional.begin(), k.optional.end(), key) == k.optional.end())
        errors.push_back(name + "." + key + ": unknown key");
    }
  }
  for (const auto& [path, value] : overrides) {
    const auto dot = path.find('.');
    const std::string section = path.substr(0, dot);
    const auto it = schema().find(section);
    if (dot == std::string::npos || it == schema().end()) {
      errors.push_back(path + ": unknown override");
      continue;
    }
    tree.put(pt::ptree::path_type(path), value);
  }

  Reader r(tree, from_file, errors);
  RunConfig cfg;
  SimGrid& grid = cfg.medium.grid;
  SpectralFeature feature;
  StarkGradient gradient;
  std::optional<double> t2;

  r.number("grid", "z_min", grid.z_min);
  r.number("grid", "z_max", grid.z_max);
  r.integer("grid", "n_z", grid.n_z);
  r.number("grid", "t_step", grid.t_step);
  r.integer("grid", "n_detune", grid.n_detune);
  r.number("grid", "detune_half_width", grid.detune_half_width);
  r.number("grid", "c_medium", grid.c_medium);

  if (const auto s = r.text("feature", "shape")) {
    if (*s == "top_hat") feature.shape = FeatureShape::top_hat;
    else if (*s == "gaussian") feature.shape = FeatureShape::gaussian;
    else r.fail("feature", "shape", "expected top_hat or gaussian, got '" + *s + "'");
  }
  r.number("feature", "width", feature.width);
  r.number("feature", "center", feature.center);
  r.number("feature", "peak_optical_depth", feature.peak_optical_depth);
  if (r.has("feature", "homogeneous_t2")) {
    double v = 0.0;
    r.number("feature", "homogeneous_t2", v);
    t2 = v;
  }

  gradient.voltage = 25.0;
  gradient.polarity = 1;
  r.number("gradient", "broadening_rate", gradient.broadening_rate);
  r.number("gradient", "voltage", gradient.voltage);
  r.integer("gradient", "polarity", gradient.polarity);

  cfg.coupling_target = feature.peak_optical_depth;
  double fixed_coupling = 0.0;
  if (const auto s = r.text("coupling", "calibration")) {
    if (*s == "unbroadened") cfg.coupling_mode = CouplingMode::unbroadened;
    else if (*s == "broadened") cfg.coupling_mode = CouplingMode::broadened;
    else if (*s == "fixed") cfg.coupling_mode = CouplingMode::fixed;
    else r.fail("coupling", "calibration", "expected unbroadened, broadened or fixed, got '" + *s + "'");
  }
  if (cfg.coupling_mode == CouplingMode::broadened) {
    if (!r.has("coupling", "optical_depth"))
      r.fail("coupling", "optical_depth", "required when calibration = broadened");
    r.number("coupling", "optical_depth", cfg.coupling_target);
  } else if (r.has("coupling", "optical_depth")) {
    r.fail("coupling", "optical_depth", "only used when calibration = broadened");
  }
  if (cfg.coupling_mode == CouplingMode::fixed) {
    if (!r.has("coupling", "value")) r.fail("coupling", "value", "required when calibration = fixed");
    r.number("coupling", "value", fixed_coupling);
  } else if (r.has("coupling", "value")) {
    r.fail("coupling", "value", "only used when calibration = fixed");
  }

  PulseSpec& pulse = cfg.pulse;
  if (const auto s = r.text("pulse", "shape")) {
    if (*s == "square") pulse.shape = PulseShape::square;
    else if (*s == "gaussian") pulse.shape = PulseShape::gaussian;
    else if (*s == "ramp") pulse.shape = PulseShape::ramp;
    else r.fail("pulse", "shape", "expected square, gaussian or ramp, got '" + *s + "'");
  }
  r.number("pulse", "duration", pulse.duration);
  r.number("pulse", "area", pulse.area);
  r.number("pulse", "carrier_detuning", pulse.carrier_detuning);
  r.number("pulse", "start_time", pulse.start_time);

  ProtocolSettings& proto = cfg.protocol;
  if (const auto s = r.text("protocol", "mode")) {
    if (*s == "linearized") proto.mode = BlochMode::linearized;
    else if (*s == "full_bloch" || *s == "full-bloch") proto.mode = BlochMode::full_bloch;
    else r.fail("protocol", "mode", "expected linearized or full_bloch, got '" + *s + "'");
  }
  r.number("protocol", "tau", proto.tau);
  r.number("protocol", "flip_ramp", proto.flip_ramp);
  r.number("protocol", "fid_record", proto.fid_record);
  proto.delays = r.list("protocol", "delays", proto.delays);
  proto.areas = r.list("protocol", "areas", parse_range("0.05:1.5707963267948966:20"));

  // invariants, each reported against its key
  if (grid.n_z < 2) r.fail("grid", "n_z", "must be >= 2");
  if (!(grid.t_step > 0.0)) r.fail("grid", "t_step", "must be > 0");
  if (!(grid.z_max > grid.z_min)) r.fail("grid", "z_max", "must exceed z_min");
  if (!(grid.c_medium > 0.0)) r.fail("grid", "c_medium", "must be > 0");
  if (r.has("grid", "n_detune") && grid.n_detune < 1) r.fail("grid", "n_detune", "must be >= 1");
  if (r.has("grid", "detune_half_width") && !(grid.detune_half_width > 0.0))
    r.fail("grid", "detune_half_width", "must be > 0");
  if (!(feature.width > 0.0)) r.fail("feature", "width", "must be > 0");
  if (!(feature.peak_optical_depth >= 0.0)) r.fail("feature", "peak_optical_depth", "must be >= 0");
  if (t2 && !(*t2 > 0.0)) r.fail("feature", "homogeneous_t2", "must be > 0");
  if (gradient.polarity < -1 || gradient.polarity > 1)
    r.fail("gradient", "polarity", "must be -1, 0 or 1");
  if (!(gradient.broadening_rate >= 0.0)) r.fail("gradient", "broadening_rate", "must be >= 0");
  if (!(cfg.coupling_target >= 0.0)) r.fail("coupling", "optical_depth", "must be >= 0");
  if (!(fixed_coupling >= 0.0)) r.fail("coupling", "value", "must be >= 0");
  if (!(pulse.duration > 0.0)) r.fail("pulse", "duration", "must be > 0");
  if (!(pulse.area >= 0.0)) r.fail("pulse", "area", "must be >= 0");
  if (!(pulse.start_time >= 0.0)) r.fail("pulse", "start_time", "must be >= 0");
  if (!(proto.tau > 0.0)) r.fail("protocol", "tau", "must be > 0");
  if (!(proto.flip_ramp >= 0.0)) r.fail("protocol", "flip_ramp", "must be >= 0");
  if (!(proto.fid_record > 0.0)) r.fail("protocol", "fid_record", "must be > 0");
  if (proto.delays.empty()) r.fail("protocol", "delays", "must not be empty");
  if (proto.areas.empty()) r.fail("protocol", "areas", "must not be empty");
  if (!errors.empty()) return result;

  size_detuning_lattice(grid, feature, gradient, r.has("grid", "detune_half_width"),
                        r.has("grid", "n_detune"));
  if (grid.t_step > grid.max_t_step()) {
    r.fail("grid", "t_step",
           "exceeds dz / c_medium; suggested maximum " + num(grid.max_t_step()) + " us");
    return result;
  }

  try {
    cfg.medium = build_medium(grid, feature, gradient);
  } catch (const Error& e) {
    const std::string key = e.code() == ErrorCode::GridTooNarrow ? "grid.detune_half_width" : "grid";
    errors.push_back(key + ": " + e.what());
    return result;
  }
  cfg.medium.homogeneous_t2 = t2;
  try {
    switch (cfg.coupling_mode) {
      case CouplingMode::unbroadened:
        cfg.medium = calibrate_unbroadened(cfg.medium, cfg.coupling_target);
        break;
      case CouplingMode::broadened:
        cfg.medium = calibrate_broadened(cfg.medium, cfg.coupling_target);
        break;
      case CouplingMode::fixed:
        cfg.medium.coupling = fixed_coupling;
        break;
    }
  } catch (const Error& e) {
    errors.push_back(std::string("coupling.calibration: ") + e.what());
    return result;
  }
  result.config = std::move(cfg);
  return result;
}

std::string RunConfig::resolved_text() const {
  const SimGrid& g = medium.grid;
  const SpectralFeature& f = medium.feature;
  const StarkGradient& s = medium.gradient;
  std::ostringstream os;
  os << "[grid]\n"
     << "z_min = " << num(g.z_min) << "\nz_max = " << num(g.z_max) << "\nn_z = " << g.n_z
     << "\nt_step = " << num(g.t_step) << "\nn_detune = " << g.n_detune
     << "\ndetune_half_width = " << num(g.detune_half_width) << "\nc_medium = " << num(g.c_medium)
     << "\n\n[feature]\n"
     << "shape = " << (f.shape == FeatureShape::top_hat ? "top_hat" : "gaussian")
     << "\nwidth = " << num(f.width) << "\ncenter = " << num(f.center)
     << "\npeak_optical_depth = " << num(f.peak_optical_depth) << "\n";
  if (medium.homogeneous_t2) os << "homogeneous_t2 = " << num(*medium.homogeneous_t2) << "\n";
  os << "\n[gradient]\n"
     << "broadening_rate = " << num(s.broadening_rate) << "\nvoltage = " << num(s.voltage)
     << "\npolarity = " << s.polarity << "\n\n[coupling]\ncalibration = "
     << (coupling_mode == CouplingMode::unbroadened ? "unbroadened"
         : coupling_mode == CouplingMode::broadened ? "broadened"
                                                    : "fixed")
     << "\n";
  if (coupling_mode == CouplingMode::broadened) os << "optical_depth = " << num(coupling_target) << "\n";
  os << "value = " << num(medium.coupling) << "\n\n[pulse]\nshape = "
     << (pulse.shape == PulseShape::square ? "square"
         : pulse.shape == PulseShape::gaussian ? "gaussian"
                                               : "ramp")
     << "\nduration = " << num(pulse.duration) << "\narea = " << num(pulse.area)
     << "\ncarrier_detuning = " << num(pulse.carrier_detuning)
     << "\nstart_time = " << num(pulse.start_time) << "\n\n[protocol]\nmode = "
     << (protocol.mode == BlochMode::linearized ? "linearized" : "full_bloch")
     << "\ntau = " << num(protocol.tau) << "\nflip_ramp = " << num(protocol.flip_ramp)
     << "\nfid_record = " << num(protocol.fid_record) << "\ndelays = ";
  for (std::size_t k = 0; k < protocol.delays.size(); ++k)
    os << (k ? "," : "") << num(protocol.delays[k]);
  os << "\nareas = ";
  for (std::size_t k = 0; k < protocol.areas.size(); ++k)
    os << (k ? "," : "") << num(protocol.areas[k]);
  os << "\n\n[derived]\nstark_half_width_khz = " << num(stark_half_width_khz()) << "\n";
  return os.str();
}

std::string RunConfig::hash() const { return sha256_hex(resolved_text()); }

}  // namespace starkecho
