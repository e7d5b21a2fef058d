#include "coda/session.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "coda/volume.hpp"

namespace coda {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << j.dump(1) << '\n';
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

}  // namespace

void write_session(const fs::path& dir, const SessionState& initial) {
  fs::create_directories(dir);
  write_volume(dir / session_files::labels, initial.labels);
  if (initial.fit_mask) write_volume(dir / session_files::fit_mask, *initial.fit_mask);
  write_json(dir / session_files::graph, initial.graph);
  std::ofstream(dir / session_files::journal, std::ios::trunc);
  write_current(dir, initial);
}

SessionState load_initial(const fs::path& dir, Exec exec) {
  LabelGrid labels = read_labels(dir / session_files::labels);
  std::optional<MaskGrid> mask;
  if (fs::exists(dir / session_files::fit_mask)) {
    mask = read_mask(dir / session_files::fit_mask);
    require_same_geometry(labels, *mask, "session fit mask");
  }
  SkeletonGraph graph = read_json(dir / session_files::graph).get<SkeletonGraph>();
  auto fits = fit_instances(labels, mask ? &*mask : nullptr, exec);
  return SessionState::make(std::move(labels), std::move(mask), std::move(graph), std::move(fits));
}

std::vector<EditCommand> load_journal(const fs::path& dir) {
  std::vector<EditCommand> out;
  std::ifstream in(dir / session_files::journal);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(command_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error("journal line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void append_journal(const fs::path& dir, const EditCommand& cmd) {
  std::ofstream out(dir / session_files::journal, std::ios::app);
  if (!out) throw Error("cannot append to the journal in " + dir.string());
  out << command_to_json(cmd).dump() << '\n';
}

void write_current(const fs::path& dir, const SessionState& s) {
  const fs::path cur = dir / session_files::current;
  fs::create_directories(cur);
  write_volume(cur / session_files::labels, s.labels);
  json g = s.graph;
  g["revision"] = s.revision;
  write_json(cur / session_files::graph, g);
}

std::unique_ptr<EditSession> open_session(const fs::path& dir, Exec exec) {
  return EditSession::replay(load_initial(dir, exec), load_journal(dir));
}

}  // namespace coda
