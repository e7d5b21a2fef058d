// Command-line front end. Every subcommand prints one JSON object on success;
// failures print {"error": ..., "subcommand": ...} to stderr and exit nonzero.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coda/features.hpp"
#include "coda/linkproto.hpp"
#include "coda/pipeline.hpp"
#include "coda/service.hpp"
#include "coda/session.hpp"
#include "coda/synth.hpp"
#include "coda/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coda;

namespace {

Exec exec_of(bool serial) { return serial ? Exec::serial : Exec::parallel; }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

/// "a,b" label pairs, sorted.
std::string pair_csv(const char* a, const char* b, std::vector<std::pair<Label, Label>> rows) {
  std::sort(rows.begin(), rows.end());
  std::string out = std::string(a) + "," + b + "\n";
  for (const auto& [x, y] : rows) out += std::to_string(x) + "," + std::to_string(y) + "\n";
  return out;
}

std::string edge_csv(const SkeletonGraph& g) {
  std::vector<std::pair<Label, Label>> rows;
  for (const auto& [k, e] : g.edges()) rows.emplace_back(e.source, e.target);
  return pair_csv("source_label", "target_label", std::move(rows));
}

json state_summary(const SessionState& s) {
  return {{"revision", s.revision},
          {"vertices", s.graph.vertex_count()},
          {"edges", s.graph.edge_count()},
          {"next_label", s.next_label}};
}

Spacing parse_spacing(const std::vector<double>& v) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw Error("spacing takes 1 or 3 values");
}

volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_signal(int) { g_stop = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Colony skeleton pipeline: segmentation, skeleton tree estimation and proofreading."};
  app.require_subcommand(1);
  bool serial = false;
  app.add_flag("--serial", serial, "Run kernels single-threaded");

  std::string in1, in2, out;
  double persistence = 0.0;

  auto* edt = app.add_subcommand("edt", "Euclidean distance transform of a mask");
  edt->add_option("--mask", in1, "Mask volume header")->required();
  edt->add_option("--out", out, "Output scalar volume header")->required();

  auto* ws = app.add_subcommand("watershed", "Persistence watershed of a scalar field");
  ws->add_option("--field", in1, "Scalar volume header")->required();
  ws->add_option("--mask", in2, "Foreground mask header")->required();
  ws->add_option("--persistence", persistence, "Merge threshold in mm")->required()->check(CLI::NonNegativeNumber);
  ws->add_option("--out", out, "Output label volume header")->required();

  auto* prop = app.add_subcommand("propagate", "Assign skeleton voxels the nearest calyx label");
  prop->add_option("--calyx", in1, "Calyx label volume header")->required();
  prop->add_option("--skeleton", in2, "Skeleton mask header")->required();
  prop->add_option("--out", out, "Output label volume header")->required();

  auto* seg = app.add_subcommand("segment", "Mask to instances (distance transform + watershed)");
  seg->add_option("--mask", in1, "Mask volume header")->required();
  seg->add_option("--persistence", persistence, "Merge threshold in mm")->required()->check(CLI::NonNegativeNumber);
  seg->add_option("--out", out, "Output label volume header")->required();

  auto* tree = app.add_subcommand("tree", "Instances to an oriented, pruned skeleton graph; writes a session");
  tree->add_option("--calyx", in1, "Calyx label volume header")->required();
  tree->add_option("--skeleton", in2, "Skeleton mask header")->required();
  tree->add_option("--out", out, "Session directory")->required();

  std::string session_dir, shared_root = fs::temp_directory_path().string(), folder, name = "features";
  auto* feat = app.add_subcommand("features", "Publish vertex/edge feature tables of a session");
  feat->add_option("--session", session_dir, "Session directory")->required();
  feat->add_option("--folder", folder, "Existing shared folder (default: create one under --shared-root)");
  feat->add_option("--shared-root", shared_root, "Root for a new amira_coda_* folder")->envname("CODA_SHARED_ROOT");
  feat->add_option("--name", name, "Table name");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP service over a session");
  serve->add_option("--session", session_dir, "Session directory")->required();
  serve->add_option("--host", host, "Bind address")->envname("CODA_HOST");
  serve->add_option("--port", port, "Port (0 picks one)")->envname("CODA_PORT");
  serve->add_option("--shared-root", shared_root, "Root for the amira_coda_* folder")->envname("CODA_SHARED_ROOT");
  serve->add_option("--name", name, "Table name");

  ColonySpec spec;
  std::vector<double> spacing = {spec.spacing.sx};
  auto* synth = app.add_subcommand("synth", "Generate a synthetic colony with its ground-truth tree");
  synth->add_option("--seed", spec.seed, "Random seed");
  synth->add_option("--generations", spec.generations, "Requested generations")->check(CLI::PositiveNumber);
  synth->add_option("--joint-probability", spec.joint_probability, "Secondary joint probability per corallite")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--max-corallites", spec.max_corallites, "Upper bound on corallites")->check(CLI::PositiveNumber);
  synth->add_option("--spacing", spacing, "Voxel spacing in mm (1 or 3 values)");
  synth->add_option("--out", out, "Output directory")->required();

  std::string command, commands_file;
  auto* apply = app.add_subcommand("apply", "Apply edit commands to a session");
  apply->add_option("--session", session_dir, "Session directory")->required();
  auto* cmd_opt = apply->add_option("--command", command, "One command as JSON");
  apply->add_option("--file", commands_file, "JSON lines of commands")->excludes(cmd_opt);

  auto* undo = app.add_subcommand("undo", "Undo the last command of a session");
  undo->add_option("--session", session_dir, "Session directory")->required();

  auto* replay = app.add_subcommand("replay", "Replay a session journal and rewrite current/");
  replay->add_option("--session", session_dir, "Session directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", e.what()}, {"subcommand", nullptr}}.dump() << '\n';
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  CLI::App* sub = app.get_subcommands().front();
  const Exec ex = exec_of(serial);
  try {
    json result;
    if (sub == edt) {
      write_volume(out, euclidean_distance_transform(read_mask(in1), ex));
      result = {{"out", out}};
    } else if (sub == ws) {
      const LabelGrid l = persistence_watershed(read_scalar(in1), read_mask(in2), persistence);
      write_volume(out, l);
      result = {{"out", out}, {"instances", instance_set(l).size()}};
    } else if (sub == prop) {
      const auto r = propagate_labels(read_labels(in1), read_mask(in2), ex);
      write_volume(out, r.labels);
      result = {{"out", out}, {"unreached", r.unreached}};
    } else if (sub == seg) {
      const LabelGrid l = segment(read_mask(in1), persistence, ex);
      write_volume(out, l);
      result = {{"out", out}, {"instances", instance_set(l).size()}};
    } else if (sub == tree) {
      TreeResult r = build_tree(read_labels(in1), read_mask(in2), ex);
      const std::size_t pruned = r.pruned.size();
      SessionState s = SessionState::make(std::move(r.corallites), std::move(r.fit_mask), std::move(r.graph),
                                          std::move(r.fits));
      write_session(out, s);
      write_text(fs::path(out) / "tree_edges.csv", edge_csv(s.graph));
      result = {{"out", out},
                {"vertices", s.graph.vertex_count()},
                {"rag_edges", r.rag_edges},
                {"pruned", pruned},
                {"edges", s.graph.edge_count()},
                {"unreached", r.unreached}};
    } else if (sub == feat) {
      const auto session = open_session(session_dir, ex);
      const auto s = session->snapshot();
      const SharedFolder core = folder.empty() ? SharedFolder::create(shared_root, Side::core)
                                               : SharedFolder(folder, Side::core);
      const auto v = core.publish(Role::vertex_table, name, vertex_features(s->labels, s->graph, s->fits, ex));
      const auto e = core.publish(Role::edge_table, name, edge_features(s->graph, s->fits));
      result = {{"folder", core.path().string()},
                {"files", {v.filename().string(), e.filename().string()}},
                {"revision", s->revision}};
    } else if (sub == serve) {
      ServiceOptions opts;
      opts.session_dir = session_dir;
      opts.shared_root = shared_root;
      opts.table_name = name;
      opts.exec = ex;
      Service service(open_session(session_dir, ex), opts);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const int bound = service.start(host, port);
      std::cout << json{{"host", host}, {"port", bound}, {"folder", service.shared_folder().string()},
                        {"revision", service.revision()}}
                       .dump()
                << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
      return 0;
    } else if (sub == synth) {
      spec.spacing = parse_spacing(spacing);
      const Colony c = generate(spec);
      fs::create_directories(out);
      const fs::path dir = out;
      write_volume(dir / "calyx.json", c.calyx);
      write_volume(dir / "skeleton.json", c.skeleton);
      write_text(dir / "truth_edges.csv", edge_csv(c.truth));
      std::vector<std::pair<Label, Label>> joints(c.joints.begin(), c.joints.end());
      write_text(dir / "joints.csv", pair_csv("label_a", "label_b", std::move(joints)));
      result = {{"out", out},
                {"corallites", c.corallites.size()},
                {"generations", c.generations},
                {"edges", c.truth.edge_count()},
                {"joints", c.joints.size()}};
    } else if (sub == apply || sub == undo) {
      auto session = open_session(session_dir, ex);
      std::vector<EditCommand> cmds;
      if (sub == undo) {
        cmds.push_back({0, UndoCmd{}});
      } else if (!command.empty()) {
        cmds.push_back(command_from_json(json::parse(command)));
      } else if (!commands_file.empty()) {
        std::ifstream in(commands_file);
        if (!in) throw Error("cannot read " + commands_file);
        for (std::string line; std::getline(in, line);)
          if (line.find_first_not_of(" \t\r") != std::string::npos) cmds.push_back(command_from_json(json::parse(line)));
      } else {
        throw Error("apply needs --command or --file");
      }
      json created = json::array();
      // All commands are validated against the session before anything is journaled.
      for (auto& c : cmds) created.push_back(session->apply(std::move(c)).created);
      const auto& journal = session->journal();
      for (std::size_t i = journal.size() - cmds.size(); i < journal.size(); ++i)
        append_journal(session_dir, journal[i]);
      write_current(session_dir, *session->snapshot());
      result = state_summary(*session->snapshot());
      result["created"] = created;
    } else if (sub == replay) {
      const auto session = open_session(session_dir, ex);
      write_current(session_dir, *session->snapshot());
      result = state_summary(*session->snapshot());
      result["commands"] = session->journal().size();
    }
    std::cout << result.dump() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"subcommand", sub->get_name()}}.dump() << '\n';
    return 1;
  }
}
