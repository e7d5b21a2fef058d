#include <doctest.h>

#include <condition_variable>
#include <fstream>
#include <random>
#include <mutex>

#include "coda/linkproto.hpp"

using namespace coda;
namespace fs = std::filesystem;

namespace {

struct TempRoot {
  fs::path path;
  TempRoot() {
    path = fs::temp_directory_path() / ("coda_link_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempRoot() { fs::remove_all(path); }
};

/// Collects watcher events for waiting on.
struct Inbox {
  std::mutex m;
  std::condition_variable cv;
  std::vector<FolderEvent> events;

  void push(const FolderEvent& e) {
    std::lock_guard lock(m);
    events.push_back(e);
    cv.notify_all();
  }

  bool wait_for(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(m);
    return cv.wait_for(lock, timeout, [&] { return events.size() >= n; });
  }

  std::vector<FolderEvent> take() {
    std::lock_guard lock(m);
    return events;
  }
};

FeatureTable small_table(std::int64_t k) {
  FeatureTable t(TableKind::vertex);
  t.add_column("label", {std::int64_t{1}, k});
  t.add_column("volume_mm3", {0.5, 2.25});
  return t;
}

}  // namespace

TEST_SUITE("names") {
  TEST_CASE("role file names and writers") {
    CHECK(file_name(Role::vertex_table, "features") == "amira_vertex_features.csv");
    CHECK(file_name(Role::edge_table, "a-b_1") == "amira_edge_a-b_1.csv");
    CHECK(file_name(Role::vertex_colormap) == "amira_vertex_colormap.csv");
    CHECK(file_name(Role::ui_edge_selection) == "coda_edge_selection.csv");
    CHECK(writer_of(Role::edge_colormap) == Side::core);
    CHECK(writer_of(Role::ui_vertex_colormap) == Side::ui);
    CHECK_THROWS_AS(file_name(Role::vertex_table, "colormap"), Error);
    CHECK_THROWS_AS(file_name(Role::vertex_table, ""), Error);
    CHECK_THROWS_AS(file_name(Role::vertex_table, "a b"), Error);
    CHECK_THROWS_AS(file_name(Role::vertex_colormap, "x"), Error);
  }

  TEST_CASE("parse inverts file_name for every role") {
    for (const Role r : kAllRoles) {
      const FileId id{r, has_name(r) ? "t1" : ""};
      CHECK(parse_file_name(file_name(id)) == id);
    }
    CHECK_FALSE(parse_file_name("amira_vertex_.csv"));
    CHECK_FALSE(parse_file_name("notes.txt"));
    CHECK_FALSE(parse_file_name(".amira_vertex_x.csv.tmp1_2"));
    CHECK_FALSE(parse_file_name("coda_vertex_selection.csv.bak"));
  }

  TEST_CASE("colors") {
    CHECK(to_hex({255, 0, 16}) == "#FF0010");
    CHECK(rgb_from_hex("#ff0010") == Rgb{255, 0, 16});
    CHECK_THROWS_AS(rgb_from_hex("FF0010"), Error);
    CHECK_THROWS_AS(rgb_from_hex("#12345"), Error);
  }
}

TEST_SUITE("shared folder") {
  TEST_CASE("selection rows 0 and 2 of 3") {
    const auto t = selection_table(3, {0, 2});
    CHECK(to_csv(t) == "selected\n1\n0\n1\n");
    CHECK(selected_rows(t) == std::set<std::size_t>{0, 2});
    CHECK_THROWS_AS(selection_table(3, {3}), Error);
    CHECK_THROWS_AS(selected_rows(from_csv("selected\n2\n")), Error);
  }

  TEST_CASE("every role round-trips through its writer") {
    TempRoot root;
    const SharedFolder core = SharedFolder::create(root.path, Side::core);
    const SharedFolder ui(core.path(), Side::ui);
    CHECK(core.path().filename().string().rfind(kFolderPrefix, 0) == 0);
    CHECK(SharedFolder::discover(root.path) == std::vector<fs::path>{core.path()});

    const auto vt = small_table(7);
    const auto colors = colormap_table({{1, 2, 3}, {250, 251, 252}});
    const auto sel = selection_table(2, {1});
    for (const Role r : kAllRoles) {
      const SharedFolder& writer = writer_of(r) == Side::core ? core : ui;
      const SharedFolder& other = writer_of(r) == Side::core ? ui : core;
      const std::string name = has_name(r) ? "features" : "";
      const FeatureTable& t = has_name(r) ? vt
                              : (r == Role::ui_vertex_selection || r == Role::ui_edge_selection) ? sel
                                                                                                   : colors;
      CHECK_THROWS_AS(other.publish(r, name, t), Error);
      writer.publish(r, name, t);
      CHECK(other.read(r, name).same_values(t));
      CHECK(other.exists(r, name));
    }
    CHECK(core.list().size() == 8);
    CHECK(colormap_colors(core.read(Role::edge_colormap)) == std::vector<Rgb>{{1, 2, 3}, {250, 251, 252}});
    CHECK(selected_rows(core.read(Role::ui_vertex_selection)) == std::set<std::size_t>{1});
  }

  TEST_CASE("atomic write leaves no temp files") {
    TempRoot root;
    for (int i = 0; i < 20; ++i) atomic_write(root.path / "amira_vertex_x.csv", std::to_string(i));
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(root.path)) ++n;
    CHECK(n == 1);
    std::ifstream in(root.path / "amira_vertex_x.csv");
    std::string s;
    in >> s;
    CHECK(s == "19");
  }

  TEST_CASE("missing folder is an error") {
    CHECK_THROWS_AS(SharedFolder("/nonexistent/amira_coda_1", Side::core), Error);
  }
}

TEST_SUITE("watcher") {
  TEST_CASE("created, modified and deleted events") {
    TempRoot root;
    const SharedFolder ui = SharedFolder::create(root.path, Side::ui);
    Inbox inbox;
    FolderWatcher w(ui.path(), [&](const FolderEvent& e) { inbox.push(e); });

    ui.publish(Role::ui_vertex_selection, selection_table(4, {1}));
    REQUIRE(inbox.wait_for(1, std::chrono::milliseconds(500)));
    ui.publish(Role::ui_vertex_selection, selection_table(4, {1, 2}));
    REQUIRE(inbox.wait_for(2, std::chrono::milliseconds(500)));
    fs::remove(ui.path() / file_name(Role::ui_vertex_selection));
    REQUIRE(inbox.wait_for(3, std::chrono::milliseconds(500)));
    const auto ev = inbox.take();
    CHECK(ev[0].kind == ChangeKind::created);
    CHECK(ev[1].kind == ChangeKind::modified);
    CHECK(ev[2].kind == ChangeKind::deleted);
    for (const auto& e : ev) CHECK(e.file.role == Role::ui_vertex_selection);
  }

  TEST_CASE("a burst of writes is one debounced event") {
    TempRoot root;
    const SharedFolder core = SharedFolder::create(root.path, Side::core);
    Inbox inbox;
    FolderWatcher w(core.path(), [&](const FolderEvent& e) { inbox.push(e); },
                    WatchOptions{std::chrono::milliseconds(5), std::chrono::milliseconds(150)});
    for (int i = 0; i < 10; ++i) {
      core.publish(Role::vertex_table, "burst", small_table(i));
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    REQUIRE(inbox.wait_for(1, std::chrono::milliseconds(1000)));
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    const auto ev = inbox.take();
    CHECK(ev.size() == 1);
    CHECK(ev[0].file == FileId{Role::vertex_table, "burst"});
  }

  TEST_CASE("files outside the protocol are ignored") {
    TempRoot root;
    Inbox inbox;
    FolderWatcher w(root.path, [&](const FolderEvent& e) { inbox.push(e); });
    std::ofstream(root.path / "readme.txt") << "x";
    std::ofstream(root.path / "amira_vertex_colormap.csv.bak") << "x";
    CHECK_FALSE(inbox.wait_for(1, std::chrono::milliseconds(200)));
  }

  TEST_CASE("readers never see a torn table") {
    TempRoot root;
    const SharedFolder core = SharedFolder::create(root.path, Side::core);
    const SharedFolder ui(core.path(), Side::ui);
    core.publish(Role::vertex_table, "t", small_table(0));
    std::atomic<bool> stop{false};
    std::thread writer([&] {
      for (std::int64_t k = 1; !stop; ++k) {
        FeatureTable t(TableKind::vertex);
        std::vector<Value> col(200, Value{k});
        t.add_column("k", col);
        t.add_column("k2", col);
        core.publish(Role::vertex_table, "t", t);
      }
    });
    int reads = 0, bad = 0;
    const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(500);
    while (std::chrono::steady_clock::now() < until) {
      const auto t = ui.read(Role::vertex_table, "t");
      ++reads;
      if (t.has_column("k")) {
        const auto& a = t.column("k").values;
        const auto& b = t.column("k2").values;
        if (a.size() != 200 || a != b || std::set<Value>(a.begin(), a.end()).size() != 1) ++bad;
      }
    }
    stop = true;
    writer.join();
    CHECK(reads > 10);
    CHECK(bad == 0);
  }
}
