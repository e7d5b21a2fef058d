#include "coda/linkproto.hpp"

#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace coda {

namespace fs = std::filesystem;

namespace {

struct RoleName {
  Role role;
  const char* prefix;  // for named tables
  const char* fixed;   // for fixed names
};

constexpr RoleName kNames[] = {
    {Role::vertex_table, "amira_vertex_", nullptr},
    {Role::edge_table, "amira_edge_", nullptr},
    {Role::vertex_colormap, nullptr, "amira_vertex_colormap.csv"},
    {Role::edge_colormap, nullptr, "amira_edge_colormap.csv"},
    {Role::ui_vertex_selection, nullptr, "coda_vertex_selection.csv"},
    {Role::ui_edge_selection, nullptr, "coda_edge_selection.csv"},
    {Role::ui_vertex_colormap, nullptr, "coda_vertex_colormap.csv"},
    {Role::ui_edge_colormap, nullptr, "coda_edge_colormap.csv"},
};

bool valid_name(const std::string& n) {
  if (n.empty() || n == "colormap") return false;
  return std::all_of(n.begin(), n.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Side writer_of(Role r) {
  switch (r) {
    case Role::vertex_table:
    case Role::edge_table:
    case Role::vertex_colormap:
    case Role::edge_colormap:
      return Side::core;
    default:
      return Side::ui;
  }
}

bool has_name(Role r) { return r == Role::vertex_table || r == Role::edge_table; }

std::string file_name(Role r, const std::string& name) {
  for (const auto& rn : kNames) {
    if (rn.role != r) continue;
    if (rn.fixed) {
      if (!name.empty()) throw Error(std::string("role ") + rn.fixed + " takes no name");
      return rn.fixed;
    }
    if (!valid_name(name)) throw Error("invalid table name '" + name + "'");
    return std::string(rn.prefix) + name + ".csv";
  }
  throw Error("unknown role");
}

std::string file_name(const FileId& id) { return file_name(id.role, id.name); }

std::optional<FileId> parse_file_name(const std::string& f) {
  for (const auto& rn : kNames)
    if (rn.fixed && f == rn.fixed) return FileId{rn.role, ""};
  constexpr std::string_view ext = ".csv";
  if (f.size() <= ext.size() || f.compare(f.size() - ext.size(), ext.size(), ext) != 0) return std::nullopt;
  for (const auto& rn : kNames) {
    if (!rn.prefix) continue;
    const std::string_view prefix = rn.prefix;
    if (f.rfind(prefix, 0) != 0) continue;
    std::string name = f.substr(prefix.size(), f.size() - prefix.size() - ext.size());
    if (valid_name(name)) return FileId{rn.role, std::move(name)};
  }
  return std::nullopt;
}

std::string to_hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", c[0], c[1], c[2]);
  return buf;
}

Rgb rgb_from_hex(const std::string& s) {
  if (s.size() != 7 || s[0] != '#' ||
      !std::all_of(s.begin() + 1, s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); }))
    throw Error("invalid color '" + s + "'");
  const unsigned long v = std::stoul(s.substr(1), nullptr, 16);
  return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

FeatureTable selection_table(std::size_t rows, const std::set<std::size_t>& selected) {
  std::vector<Value> col(rows, Value{std::int64_t{0}});
  for (const std::size_t r : selected) {
    if (r >= rows) throw Error("selected row " + std::to_string(r) + " out of range");
    col[r] = std::int64_t{1};
  }
  FeatureTable t;
  t.add_column("selected", std::move(col));
  return t;
}

std::set<std::size_t> selected_rows(const FeatureTable& t) {
  std::set<std::size_t> out;
  const auto& col = t.column("selected").values;
  for (std::size_t r = 0; r < col.size(); ++r) {
    const auto* v = std::get_if<std::int64_t>(&col[r]);
    if (!v || (*v != 0 && *v != 1)) throw Error("selection row " + std::to_string(r) + " is not 0/1");
    if (*v == 1) out.insert(r);
  }
  return out;
}

FeatureTable colormap_table(const std::vector<Rgb>& colors) {
  std::vector<Value> col;
  col.reserve(colors.size());
  for (const auto& c : colors) col.emplace_back(to_hex(c));
  FeatureTable t;
  t.add_column("color", std::move(col));
  return t;
}

std::vector<Rgb> colormap_colors(const FeatureTable& t) {
  std::vector<Rgb> out;
  for (const auto& v : t.column("color").values) {
    const auto* s = std::get_if<std::string>(&v);
    if (!s) throw Error("colormap cell is not a string");
    out.push_back(rgb_from_hex(*s));
  }
  return out;
}

void atomic_write(const fs::path& path, const std::string& contents) {
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()) +
                                             "_" + std::to_string(counter++));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("rename to " + path.string() + " failed: " + ec.message());
  }
}

// --- SharedFolder -------------------------------------------------------------------

SharedFolder::SharedFolder(fs::path path, Side side) : path_(std::move(path)), side_(side) {
  if (!fs::is_directory(path_)) throw Error("not a directory: " + path_.string());
}

SharedFolder SharedFolder::create(const fs::path& root, Side side) {
  std::random_device rd;
  std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  fs::create_directories(root);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const fs::path p = root / (kFolderPrefix + std::to_string(rng() % 1000000000ULL));
    if (fs::create_directory(p)) return SharedFolder(p, side);
  }
  throw Error("cannot create a shared folder under " + root.string());
}

std::vector<fs::path> SharedFolder::discover(const fs::path& root) {
  std::vector<fs::path> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root, ec)) {
    const std::string n = entry.path().filename().string();
    if (entry.is_directory() && n.rfind(kFolderPrefix, 0) == 0) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path SharedFolder::publish(Role r, const std::string& name, const FeatureTable& t) const {
  if (writer_of(r) != side_)
    throw Error(std::string("the ") + (side_ == Side::core ? "core" : "ui") + " side does not write this role");
  const fs::path p = path_ / file_name(r, name);
  atomic_write(p, to_csv(t));
  return p;
}

FeatureTable SharedFolder::read(Role r, const std::string& name) const {
  const TableKind kind = (r == Role::vertex_table) ? TableKind::vertex
                         : (r == Role::edge_table) ? TableKind::edge
                                                   : TableKind::other;
  return from_csv(read_file(path_ / file_name(r, name)), kind);
}

bool SharedFolder::exists(Role r, const std::string& name) const { return fs::exists(path_ / file_name(r, name)); }

std::vector<FileId> SharedFolder::list() const {
  std::vector<std::pair<std::string, FileId>> found;
  for (const auto& entry : fs::directory_iterator(path_))
    if (auto id = parse_file_name(entry.path().filename().string()); id && entry.is_regular_file())
      found.emplace_back(entry.path().filename().string(), *id);
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<FileId> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

// --- watcher --------------------------------------------------------------------------

std::string to_string(ChangeKind k) {
  switch (k) {
    case ChangeKind::created:
      return "created";
    case ChangeKind::modified:
      return "modified";
    case ChangeKind::deleted:
      return "deleted";
  }
  return "?";
}

struct FileStamp {
  std::uint64_t inode = 0;
  std::int64_t mtime_ns = 0;
  std::int64_t size = 0;

  bool operator==(const FileStamp&) const = default;
};

namespace {

std::map<std::string, FileStamp> scan(const fs::path& folder) {
  std::map<std::string, FileStamp> out;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(folder, ec)) {
    const std::string n = entry.path().filename().string();
    if (!parse_file_name(n)) continue;
    struct stat st {};
    if (::stat(entry.path().c_str(), &st) != 0 || !S_ISREG(st.st_mode)) continue;
    out[n] = {static_cast<std::uint64_t>(st.st_ino),
              static_cast<std::int64_t>(st.st_mtim.tv_sec) * 1000000000 + st.st_mtim.tv_nsec,
              static_cast<std::int64_t>(st.st_size)};
  }
  return out;
}

}  // namespace

FolderWatcher::FolderWatcher(fs::path folder, Callback cb, WatchOptions opts)
    : folder_(std::move(folder)), callback_(std::move(cb)), opts_(opts) {
  if (!fs::is_directory(folder_)) throw Error("not a directory: " + folder_.string());
  thread_ = std::thread([this, initial = scan(folder_)] { run(initial); });
}

FolderWatcher::~FolderWatcher() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
}

void FolderWatcher::run(const std::map<std::string, FileStamp>& initial) {
  using Clock = std::chrono::steady_clock;
  struct Track {
    std::optional<FileStamp> reported;  // state at the last event (or at start)
    std::optional<FileStamp> seen;      // state at the last poll
    Clock::time_point changed;          // when `seen` last changed
    bool pending = false;
  };
  std::map<std::string, Track> files;
  for (const auto& [name, stamp] : initial) files[name] = {stamp, stamp, Clock::now(), false};

  while (!stop_) {
    std::this_thread::sleep_for(opts_.poll);
    const auto now = Clock::now();
    const auto current = scan(folder_);
    for (const auto& [name, stamp] : current) files.try_emplace(name);
    for (auto& [name, t] : files) {
      auto it = current.find(name);
      std::optional<FileStamp> cur;
      if (it != current.end()) cur = it->second;
      if (cur != t.seen) {
        t.seen = cur;
        t.changed = now;
        t.pending = true;
      }
      if (!t.pending || now - t.changed < opts_.debounce) continue;
      t.pending = false;
      if (t.seen == t.reported) continue;
      FolderEvent ev;
      ev.kind = !t.reported ? ChangeKind::created : !t.seen ? ChangeKind::deleted : ChangeKind::modified;
      ev.file = *parse_file_name(name);
      t.reported = t.seen;
      try {
        callback_(ev);
      } catch (...) {
        // A failing subscriber must not stop the watcher.
      }
    }
  }
}

}  // namespace coda
