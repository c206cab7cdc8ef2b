#pragma once

// Pulse-file persistence: CSV with header `step,u1,...,uJ` (amplitudes in
// rad/s) plus a sidecar `<path>.meta` record with dt, duration, model hash and
// seed. Values are printed with 17 significant digits so the round trip is
// bit-exact.

#include "flagrape/lindblad.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace flagrape {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// FNV-1a over the raw bytes of every operator and rate in the model; lets a
/// pulse file be matched against the model it was optimized for.
inline uint64_t model_hash(const SystemModel& model) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 0x100000001b3ull;
  };
  auto mix_matrix = [&](const Matrix& m) {
    mix_bytes(m.data(), sizeof(Complex) * m.size());
  };
  const int d = model.dim();
  mix_bytes(&d, sizeof(d));
  mix_bytes(&model.space.cavity_dim, sizeof(int));
  mix_matrix(model.drift);
  for (const auto& c : model.controls) mix_matrix(c);
  for (const auto& j : model.jumps) {
    mix_matrix(j.op);
    mix_bytes(&j.rate, sizeof(double));
  }
  mix_matrix(model.projector);
  return h;
}

struct PulseMetadata {
  double dt = 0.0;
  int steps = 0;
  int channels = 0;
  uint64_t model_hash = 0;
  uint64_t seed = 0;
};

inline void save_pulse(const std::string& path, const PulseSchedule& pulses,
                       const PulseMetadata& meta) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_pulse: cannot open " + path);
  f << "step";
  for (int j = 1; j <= pulses.channels; ++j) f << ",u" << j;
  f << "\n";
  for (int k = 0; k < pulses.steps; ++k) {
    f << k;
    for (int j = 0; j < pulses.channels; ++j)
      f << "," << format_double(pulses.amplitudes(k, j));
    f << "\n";
  }

  std::ofstream m(path + ".meta");
  m << "# pulse metadata; amplitudes in the CSV are angular frequencies (rad/s)\n";
  m << "dt_s = " << format_double(pulses.dt) << "\n";
  m << "steps = " << pulses.steps << "\n";
  m << "channels = " << pulses.channels << "\n";
  m << "duration_s = " << format_double(pulses.duration()) << "\n";
  m << "model_hash = " << meta.model_hash << "\n";
  m << "seed = " << meta.seed << "\n";
}

inline std::pair<PulseSchedule, PulseMetadata> load_pulse(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_pulse: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("load_pulse: empty file");
  int channels = 0;
  for (char c : line) channels += (c == ',');
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // step index
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (int(row.size()) != channels)
      throw std::runtime_error("load_pulse: ragged row in " + path);
    rows.push_back(std::move(row));
  }

  PulseMetadata meta;
  std::ifstream m(path + ".meta");
  if (!m) throw std::runtime_error("load_pulse: missing sidecar " + path + ".meta");
  while (std::getline(m, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    const std::string val = line.substr(eq + 1);
    if (key == "dt_s") meta.dt = std::strtod(val.c_str(), nullptr);
    else if (key == "steps") meta.steps = std::atoi(val.c_str());
    else if (key == "channels") meta.channels = std::atoi(val.c_str());
    else if (key == "model_hash") meta.model_hash = std::strtoull(val.c_str(), nullptr, 10);
    else if (key == "seed") meta.seed = std::strtoull(val.c_str(), nullptr, 10);
  }
  if (meta.steps != int(rows.size()) || meta.channels != channels)
    throw std::runtime_error("load_pulse: sidecar/CSV mismatch for " + path);

  PulseSchedule p = PulseSchedule::zeros(meta.steps, channels, meta.dt);
  for (int k = 0; k < meta.steps; ++k)
    for (int j = 0; j < channels; ++j) p.amplitudes(k, j) = rows[k][j];
  return {p, meta};
}

}  // namespace flagrape
