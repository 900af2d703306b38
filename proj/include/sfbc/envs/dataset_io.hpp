#pragma once

// JSON-lines dataset files.
//
//   #meta {"env": ..., "mode": "both"|"single", "seed": N, "generated": N, "trajectories": N}
//   {"observations": [[x, v], ...], "actions": [[a], ...], "rewards": [...],
//    "terminals": [...], "timeouts": [...]}
//   ... one trajectory per line
//
// Doubles are written in shortest round-trip form, so write/read is bit-exact.

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sfbc/envs/dataset.hpp"
#include "sfbc/error.hpp"

namespace sfbc::envs {

inline constexpr const char* kMetaPrefix = "#meta ";

inline nlohmann::json trajectory_to_json(const Trajectory& t) {
  nlohmann::json j;
  j["observations"] = t.observations;
  j["actions"] = t.actions;
  j["rewards"] = t.rewards;
  j["terminals"] = t.terminals;
  j["timeouts"] = t.timeouts;
  return j;
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
  validate(ds);
  nlohmann::json meta = {{"env", ds.meta.env},
                         {"mode", ds.meta.mode},
                         {"seed", ds.meta.seed},
                         {"generated", ds.meta.generated},
                         {"trajectories", ds.trajectories.size()}};
  out << kMetaPrefix << meta.dump() << '\n';
  for (const auto& t : ds.trajectories) out << trajectory_to_json(t).dump() << '\n';
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
  std::ostringstream buf;
  write_dataset(ds, buf);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << buf.str();
  require(static_cast<bool>(f), ErrorKind::Io, "write to '" + path + "' failed");
}

/// Parses a whole stream; throws ParseError (with line number) and never
/// returns a partial dataset.
inline Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  std::size_t expected = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind(kMetaPrefix, 0) == 0) {
      if (have_meta) throw ParseError(lineno, "duplicate #meta header");
      try {
        const auto m = nlohmann::json::parse(line.substr(std::string(kMetaPrefix).size()));
        ds.meta.env = m.at("env").get<std::string>();
        ds.meta.mode = m.at("mode").get<std::string>();
        ds.meta.seed = m.at("seed").get<std::uint64_t>();
        ds.meta.generated = m.at("generated").get<std::size_t>();
        expected = m.at("trajectories").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(lineno, std::string("bad #meta header: ") + e.what());
      }
      have_meta = true;
      continue;
    }
    if (!have_meta) throw ParseError(lineno, "missing #meta header before first trajectory");
    try {
      const auto j = nlohmann::json::parse(line);
      Trajectory t;
      t.observations = j.at("observations").get<std::vector<std::vector<double>>>();
      t.actions = j.at("actions").get<std::vector<std::vector<double>>>();
      t.rewards = j.at("rewards").get<std::vector<double>>();
      t.terminals = j.at("terminals").get<std::vector<bool>>();
      t.timeouts = j.at("timeouts").get<std::vector<bool>>();
      ds.trajectories.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, e.what());
    }
  }
  if (!have_meta) throw ParseError(lineno, "missing #meta header");
  if (ds.trajectories.size() != expected)
    throw ParseError(lineno, "expected " + std::to_string(expected) + " trajectories, found " +
                                 std::to_string(ds.trajectories.size()) + " (truncated file?)");
  try {
    validate(ds);
  } catch (const Error& e) {
    throw ParseError(lineno, e.what());
  }
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot open dataset '" + path + "'");
  return read_dataset(f);
}

}  // namespace sfbc::envs
