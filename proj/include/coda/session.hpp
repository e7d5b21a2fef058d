#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "coda/edit.hpp"

namespace coda {

/// On-disk session layout:
///   labels.json/.raw    initial corallite labels
///   fit_mask.json/.raw  calyx voxels used for fits (optional)
///   graph.json          initial skeleton graph
///   journal.jsonl       applied commands, one JSON object per line
///   current/            labels and graph after the journal
namespace session_files {
inline constexpr const char* labels = "labels.json";
inline constexpr const char* fit_mask = "fit_mask.json";
inline constexpr const char* graph = "graph.json";
inline constexpr const char* journal = "journal.jsonl";
inline constexpr const char* current = "current";
}  // namespace session_files

/// Writes the initial state and an empty journal.
void write_session(const std::filesystem::path& dir, const SessionState& initial);
/// Reads the initial state; fits are recomputed from labels and mask.
SessionState load_initial(const std::filesystem::path& dir, Exec exec = Exec::parallel);
std::vector<EditCommand> load_journal(const std::filesystem::path& dir);
void append_journal(const std::filesystem::path& dir, const EditCommand& cmd);
/// Writes labels and graph of a state under dir/current.
void write_current(const std::filesystem::path& dir, const SessionState& s);
/// Initial state plus replayed journal.
std::unique_ptr<EditSession> open_session(const std::filesystem::path& dir, Exec exec = Exec::parallel);

}  // namespace coda
