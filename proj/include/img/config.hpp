#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "img/dataset.hpp"
#include "img/network.hpp"
#include "img/trainer.hpp"

namespace img {

// Structured run configuration: [dataset] / [model] / [trainer] sections of
// key = value lines, merged with command-line overrides. Unknown sections or
// keys are rejected, and the canonical echo emitted into output artifacts
// parses back to the same configuration.
struct RunConfig {
  DatasetSpec dataset;
  NetworkConfig model;  // in_channels/num_classes of 0 mean "from the archive"
  SgdConfig trainer;

  RunConfig() {
    model.in_channels = 0;
    model.num_classes = 0;
  }

  // Materialize the network config against a concrete archive.
  NetworkConfig model_for(const DatasetArchive& a) const {
    NetworkConfig m = model;
    if (m.in_channels == 0) m.in_channels = a.spec.channels;
    if (m.num_classes == 0) m.num_classes = a.spec.num_classes();
    m.validate();
    return m;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for " + key);
}

inline int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  }
}

inline double parse_real(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace detail

inline void apply_config_key(RunConfig& cfg, const std::string& section,
                             const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_int;
  using detail::parse_real;
  const std::string full = section + "." + key;
  if (section == "dataset") {
    auto& d = cfg.dataset;
    if (key == "task") d.task = task_from_name(value);
    else if (key == "train_per_class") d.train_per_class = parse_int(value, full);
    else if (key == "val_per_class") d.val_per_class = parse_int(value, full);
    else if (key == "frames") d.frames = parse_int(value, full);
    else if (key == "height") d.height = parse_int(value, full);
    else if (key == "width") d.width = parse_int(value, full);
    else if (key == "channels") d.channels = parse_int(value, full);
    else if (key == "noise_std") d.noise_std = parse_real(value, full);
    else if (key == "seed") d.seed = static_cast<std::uint64_t>(parse_int(value, full));
    else throw std::invalid_argument("config: unknown key '" + full + "'");
  } else if (section == "model") {
    auto& m = cfg.model;
    if (key == "in_channels") m.in_channels = parse_int(value, full);
    else if (key == "width") m.width = parse_int(value, full);
    else if (key == "mid") m.mid = parse_int(value, full);
    else if (key == "blocks") m.blocks = parse_int(value, full);
    else if (key == "classes") m.num_classes = parse_int(value, full);
    else if (key == "r") m.cmem.r = parse_int(value, full);
    else if (key == "alpha") m.cmem.alpha = parse_real(value, full);
    else if (key == "beta") m.cmem.beta = parse_real(value, full);
    else if (key == "attention_form") m.cmem.attention_form = attention_form_from_name(value);
    else if (key == "cmem_enabled") m.cmem_enabled = parse_bool(value, full);
    else if (key == "clim_enabled") m.clim_enabled = parse_bool(value, full);
    else if (key == "cmem_first") m.cmem_first = parse_bool(value, full);
    else if (key == "shift_mode") m.shift_mode = shift_mode_from_name(value);
    else if (key == "shift_modes") {
      const auto parts = detail::split_list(value);
      if (parts.empty()) {
        m.slice_shift_modes.reset();
      } else {
        check(parts.size() == 3, "config: shift_modes needs 3 entries");
        m.slice_shift_modes = {{shift_mode_from_name(parts[0]),
                                shift_mode_from_name(parts[1]),
                                shift_mode_from_name(parts[2])}};
      }
    } else if (key == "consensus") m.consensus = consensus_from_name(value);
    else if (key == "dropout") m.dropout = parse_real(value, full);
    else if (key == "bn_frozen") m.bn_frozen = parse_bool(value, full);
    else if (key == "init_seed") m.init_seed = static_cast<std::uint64_t>(parse_int(value, full));
    else throw std::invalid_argument("config: unknown key '" + full + "'");
  } else if (section == "trainer") {
    auto& t = cfg.trainer;
    if (key == "batch_size") t.batch_size = parse_int(value, full);
    else if (key == "lr") t.lr = parse_real(value, full);
    else if (key == "momentum") t.momentum = parse_real(value, full);
    else if (key == "weight_decay") t.weight_decay = parse_real(value, full);
    else if (key == "epochs") t.epochs = parse_int(value, full);
    else if (key == "decay_epochs") {
      t.decay_epochs.clear();
      for (const auto& p : detail::split_list(value))
        if (!p.empty()) t.decay_epochs.push_back(parse_int(p, full));
    } else if (key == "decay_factor") t.decay_factor = parse_real(value, full);
    else if (key == "seed") t.seed = static_cast<std::uint64_t>(parse_int(value, full));
    else if (key == "target_val_top1") t.target_val_top1 = parse_real(value, full);
    else throw std::invalid_argument("config: unknown key '" + full + "'");
  } else {
    throw std::invalid_argument("config: unknown section '" + section + "'");
  }
}

inline RunConfig parse_config(std::istream& is) {
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      check(line.back() == ']', "config: malformed section at line " +
                                    std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    check(eq != std::string::npos,
          "config: expected key = value at line " + std::to_string(lineno));
    check(!section.empty(),
          "config: key outside a section at line " + std::to_string(lineno));
    apply_config_key(cfg, section, detail::trim(line.substr(0, eq)),
                     detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

// Apply a "section.key=value" override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  check(eq != std::string::npos, "override must look like section.key=value");
  const std::string lhs = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  const auto dot = lhs.find('.');
  check(dot != std::string::npos, "override must look like section.key=value");
  apply_config_key(cfg, lhs.substr(0, dot), lhs.substr(dot + 1), value);
}

inline std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os << std::setprecision(17);
  os << "[dataset]\n";
  os << "task = " << task_name(cfg.dataset.task) << "\n";
  os << "train_per_class = " << cfg.dataset.train_per_class << "\n";
  os << "val_per_class = " << cfg.dataset.val_per_class << "\n";
  os << "frames = " << cfg.dataset.frames << "\n";
  os << "height = " << cfg.dataset.height << "\n";
  os << "width = " << cfg.dataset.width << "\n";
  os << "channels = " << cfg.dataset.channels << "\n";
  os << "noise_std = " << cfg.dataset.noise_std << "\n";
  os << "seed = " << cfg.dataset.seed << "\n";
  os << "\n[model]\n";
  os << "in_channels = " << cfg.model.in_channels << "\n";
  os << "width = " << cfg.model.width << "\n";
  os << "mid = " << cfg.model.mid << "\n";
  os << "blocks = " << cfg.model.blocks << "\n";
  os << "classes = " << cfg.model.num_classes << "\n";
  os << "r = " << cfg.model.cmem.r << "\n";
  os << "alpha = " << cfg.model.cmem.alpha << "\n";
  os << "beta = " << cfg.model.cmem.beta << "\n";
  os << "attention_form = " << attention_form_name(cfg.model.cmem.attention_form) << "\n";
  os << "cmem_enabled = " << (cfg.model.cmem_enabled ? "true" : "false") << "\n";
  os << "clim_enabled = " << (cfg.model.clim_enabled ? "true" : "false") << "\n";
  os << "cmem_first = " << (cfg.model.cmem_first ? "true" : "false") << "\n";
  os << "shift_mode = " << shift_mode_name(cfg.model.shift_mode) << "\n";
  os << "shift_modes = ";
  if (cfg.model.slice_shift_modes) {
    const auto& m = *cfg.model.slice_shift_modes;
    os << shift_mode_name(m[0]) << "," << shift_mode_name(m[1]) << ","
       << shift_mode_name(m[2]);
  }
  os << "\n";
  os << "consensus = " << consensus_name(cfg.model.consensus) << "\n";
  os << "dropout = " << cfg.model.dropout << "\n";
  os << "bn_frozen = " << (cfg.model.bn_frozen ? "true" : "false") << "\n";
  os << "init_seed = " << cfg.model.init_seed << "\n";
  os << "\n[trainer]\n";
  os << "batch_size = " << cfg.trainer.batch_size << "\n";
  os << "lr = " << cfg.trainer.lr << "\n";
  os << "momentum = " << cfg.trainer.momentum << "\n";
  os << "weight_decay = " << cfg.trainer.weight_decay << "\n";
  os << "epochs = " << cfg.trainer.epochs << "\n";
  os << "decay_epochs = ";
  for (std::size_t i = 0; i < cfg.trainer.decay_epochs.size(); ++i)
    os << (i ? "," : "") << cfg.trainer.decay_epochs[i];
  os << "\n";
  os << "decay_factor = " << cfg.trainer.decay_factor << "\n";
  os << "seed = " << cfg.trainer.seed << "\n";
  os << "target_val_top1 = " << cfg.trainer.target_val_top1 << "\n";
  return os.str();
}

}  // namespace img
