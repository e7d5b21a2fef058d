#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "coda/features.hpp"

namespace coda {

/// Which program owns a file. Each role has exactly one writer.
enum class Side { core, ui };

enum class Role {
  vertex_table,     // amira_vertex_{name}.csv
  edge_table,       // amira_edge_{name}.csv
  vertex_colormap,  // amira_vertex_colormap.csv
  edge_colormap,    // amira_edge_colormap.csv
  ui_vertex_selection,
  ui_edge_selection,
  ui_vertex_colormap,
  ui_edge_colormap,
};

inline constexpr std::array<Role, 8> kAllRoles = {
    Role::vertex_table,        Role::edge_table,        Role::vertex_colormap,    Role::edge_colormap,
    Role::ui_vertex_selection, Role::ui_edge_selection, Role::ui_vertex_colormap, Role::ui_edge_colormap};

inline constexpr const char* kFolderPrefix = "amira_coda_";

Side writer_of(Role r);
bool has_name(Role r);

struct FileId {
  Role role = Role::vertex_table;
  std::string name;  // only for vertex_table / edge_table

  bool operator==(const FileId&) const = default;
};

/// Filename for a role. Throws on a missing, invalid or reserved name.
std::string file_name(Role r, const std::string& name = "");
std::string file_name(const FileId& id);
/// Inverse of file_name; nullopt for files outside the protocol.
std::optional<FileId> parse_file_name(const std::string& filename);

using Rgb = std::array<std::uint8_t, 3>;

std::string to_hex(const Rgb& c);
Rgb rgb_from_hex(const std::string& s);

/// One `selected` column with 0/1 per row.
FeatureTable selection_table(std::size_t rows, const std::set<std::size_t>& selected);
std::set<std::size_t> selected_rows(const FeatureTable& t);
/// One `color` column with #RRGGBB per row.
FeatureTable colormap_table(const std::vector<Rgb>& colors);
std::vector<Rgb> colormap_colors(const FeatureTable& t);

/// Writes `contents` to `path` through a temp file in the same directory and
/// a rename, so readers see either the old or the new file.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

class SharedFolder {
 public:
  SharedFolder(std::filesystem::path path, Side side);

  /// Creates `root/amira_coda_{random}` for the given side.
  static SharedFolder create(const std::filesystem::path& root, Side side);
  /// Protocol folders directly under root, sorted by name.
  static std::vector<std::filesystem::path> discover(const std::filesystem::path& root);

  const std::filesystem::path& path() const { return path_; }
  Side side() const { return side_; }

  /// Throws if this side does not own the role.
  std::filesystem::path publish(Role r, const std::string& name, const FeatureTable& t) const;
  std::filesystem::path publish(Role r, const FeatureTable& t) const { return publish(r, "", t); }

  FeatureTable read(Role r, const std::string& name = "") const;
  bool exists(Role r, const std::string& name = "") const;
  /// Protocol files currently present, sorted by filename.
  std::vector<FileId> list() const;

 private:
  std::filesystem::path path_;
  Side side_;
};

enum class ChangeKind { created, modified, deleted };

std::string to_string(ChangeKind k);

struct FolderEvent {
  ChangeKind kind = ChangeKind::modified;
  FileId file;
};

struct WatchOptions {
  std::chrono::milliseconds poll{10};
  std::chrono::milliseconds debounce{50};
};

/// Polls a shared folder and reports protocol-file changes. A file must stay
/// unchanged for the debounce interval before its event fires; callbacks run
/// one at a time on the watcher thread. Destroying the watcher stops it.
struct FileStamp;

class FolderWatcher {
 public:
  using Callback = std::function<void(const FolderEvent&)>;

  FolderWatcher(std::filesystem::path folder, Callback cb, WatchOptions opts = {});
  ~FolderWatcher();
  FolderWatcher(const FolderWatcher&) = delete;
  FolderWatcher& operator=(const FolderWatcher&) = delete;

 private:
  void run(const std::map<std::string, FileStamp>& initial);

  std::filesystem::path folder_;
  Callback callback_;
  WatchOptions opts_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

}  // namespace coda
