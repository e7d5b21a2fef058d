#include <doctest.h>

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "coda/session.hpp"
#include "fixtures.hpp"

using namespace coda;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path = fs::temp_directory_path() / ("coda_session_test_" + std::to_string(std::random_device{}()));
  ~TempDir() { fs::remove_all(path); }
};

EditCommand cmd(const char* text) { return command_from_json(nlohmann::json::parse(text)); }

}  // namespace

TEST_CASE("write, load and reopen") {
  TempDir dir;
  const auto initial = fixture::three_blocks();
  write_session(dir.path, initial);
  for (const char* f : {session_files::labels, session_files::graph, session_files::journal})
    CHECK(fs::exists(dir.path / f));

  const auto loaded = load_initial(dir.path);
  CHECK(loaded.labels == initial.labels);
  CHECK(loaded.graph == initial.graph);
  CHECK(loaded.fits.size() == initial.fits.size());
  CHECK(load_journal(dir.path).empty());

  auto session = open_session(dir.path);
  for (const char* c : {R"({"op":"merge","labels":[1,2]})", R"({"op":"mark","vertex":3,"state":"good"})"}) {
    session->apply(cmd(c));
    append_journal(dir.path, session->journal().back());
  }
  session->undo();
  append_journal(dir.path, session->journal().back());
  write_current(dir.path, *session->snapshot());

  const auto journal = load_journal(dir.path);
  REQUIRE(journal.size() == 3);
  CHECK(journal[2].id == 3);
  CHECK(std::holds_alternative<UndoCmd>(journal[2].body));

  const auto again = open_session(dir.path);
  CHECK(again->snapshot()->labels == session->snapshot()->labels);
  CHECK(again->snapshot()->graph == session->snapshot()->graph);
  CHECK(again->snapshot()->revision == 3);
  CHECK(fs::exists(dir.path / session_files::current));
}

TEST_CASE("fit mask is stored and used") {
  TempDir dir;
  auto s = fixture::three_blocks();
  MaskGrid mask(s.labels.dims(), s.labels.spacing(), 0);
  for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = s.labels.coords(i)[1] < 2;
  s.fit_mask = mask;
  write_session(dir.path, s);
  const auto loaded = load_initial(dir.path);
  REQUIRE(loaded.fit_mask);
  CHECK(*loaded.fit_mask == mask);
  CHECK(loaded.fits.at(1).params.size() == 64);
}

TEST_CASE("corrupt journal lines are errors") {
  TempDir dir;
  write_session(dir.path, fixture::three_blocks());
  std::ofstream(dir.path / session_files::journal, std::ios::app) << "{\"op\":\"nope\"}\n";
  CHECK_THROWS_AS(load_journal(dir.path), Error);
  CHECK_THROWS_AS(open_session(dir.path / "missing"), Error);
}
