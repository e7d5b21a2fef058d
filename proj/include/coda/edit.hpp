#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "coda/graph.hpp"
#include "coda/parabola.hpp"

namespace coda {

struct MergeCmd {
  std::vector<Label> labels;
};
struct CutCmd {
  Label label = 0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};
struct AddEdgeCmd {
  Label source = 0, target = 0;
};
struct RemoveEdgeCmd {
  Label source = 0, target = 0;
};
struct FlipEdgeCmd {
  Label source = 0, target = 0;
};
struct MarkCmd {
  std::optional<Label> vertex;
  std::optional<EdgeKey> edge;
  ProofState state = ProofState::good;
};
struct UndoCmd {};

using CommandBody = std::variant<MergeCmd, CutCmd, AddEdgeCmd, RemoveEdgeCmd, FlipEdgeCmd, MarkCmd, UndoCmd>;

struct EditCommand {
  std::uint64_t id = 0;  // journal sequence number, assigned on apply
  CommandBody body;
};

/// Parses one journal line / request body. Throws Error with a reason.
EditCommand command_from_json(const nlohmann::json& j);
nlohmann::json command_to_json(const EditCommand& c);

/// Everything an edit can touch. Copied on write; readers hold snapshots.
struct SessionState {
  LabelGrid labels;
  std::optional<MaskGrid> fit_mask;  // calyx voxels used for parabola fits
  SkeletonGraph graph;
  std::map<Label, Parabola> fits;
  Label next_label = 1;  // fresh ids are never reused
  std::uint64_t revision = 0;

  /// Builds a state whose next label follows the largest present label.
  static SessionState make(LabelGrid labels, std::optional<MaskGrid> fit_mask, SkeletonGraph graph,
                           std::map<Label, Parabola> fits);
};

struct Touching {
  Vec3 point_a = Vec3::Zero();
  Vec3 point_b = Vec3::Zero();
  std::int64_t faces = 0;
  double area = 0.0;
};

/// Face-adjacent touching points between two labels (RAG rule), with the
/// shared face count and area.
std::optional<Touching> face_contact(const LabelGrid& labels, Label a, Label b);

/// Closest voxel-center pair between two labels, adjacent or not. Ties go to
/// the smallest (index in a, index in b).
Touching closest_pair(const LabelGrid& labels, Label a, Label b);

/// Thrown by EditSession::apply when the caller's base revision is stale.
class RevisionConflict : public Error {
 public:
  RevisionConflict(std::uint64_t base, std::uint64_t current)
      : Error("stale base revision " + std::to_string(base) + ", current is " + std::to_string(current)),
        current_revision(current) {}
  std::uint64_t current_revision;
};

struct EditOutcome {
  std::uint64_t revision = 0;
  std::vector<Label> created;  // fresh labels (merge: 1, cut: plus then minus)
};

/// Single-writer edit transaction log over (LabelVolume, SkeletonGraph).
///
/// apply() validates and applies one command atomically: on error nothing
/// changes. Every applied command, including undo, is journaled, so replaying
/// the journal from the initial state reproduces the current state exactly.
class EditSession {
 public:
  explicit EditSession(SessionState initial);

  /// With a base revision, the command is rejected unless it matches the
  /// current revision (checked under the writer lock).
  EditOutcome apply(EditCommand cmd, std::optional<std::uint64_t> base_revision = std::nullopt);
  EditOutcome undo() { return apply(EditCommand{0, UndoCmd{}}); }

  std::shared_ptr<const SessionState> snapshot() const;
  const SessionState& initial() const { return *initial_; }
  const std::vector<EditCommand>& journal() const { return journal_; }
  bool can_undo() const { return !undo_.empty(); }

  static std::unique_ptr<EditSession> replay(SessionState initial, const std::vector<EditCommand>& journal);

 private:
  struct UndoRecord {
    std::vector<std::pair<std::int64_t, Label>> voxels;  // index, previous label
    SkeletonGraph graph;
    std::map<Label, std::optional<Parabola>> fits;  // previous fit per touched label
  };

  UndoRecord apply_to(SessionState& s, const CommandBody& body, EditOutcome& out) const;

  std::shared_ptr<const SessionState> initial_;
  std::shared_ptr<const SessionState> current_;
  std::vector<EditCommand> journal_;
  std::vector<UndoRecord> undo_;
  mutable std::mutex snapshot_mutex_;
  std::mutex writer_mutex_;
};

struct ProofreadView {
  Label vertex = 0;
  Vec3 centroid = Vec3::Zero();
  Mat3 axes = Mat3::Identity();  // parabola frame columns
  double crop_radius = 0.0;      // 1.5 × bounding-sphere radius, mm
};

/// Centroid and view record for one instance.
ProofreadView proofread_view(const SessionState& s, Label v);

/// Nearest unseen vertex to `cursor` (ties: lowest id), skipping `exclude`.
std::optional<Label> nearest_unseen(const SessionState& s, const Vec3& cursor, const std::set<Label>& exclude);

/// Visits unseen vertices nearest-first from the current one.
class ProofreadQueue {
 public:
  explicit ProofreadQueue(std::shared_ptr<const SessionState> s);

  /// Refreshes the pending set after edits (state changes).
  void update(std::shared_ptr<const SessionState> s);
  void set_cursor(const Vec3& p) { cursor_ = p; }
  const std::optional<Vec3>& cursor() const { return cursor_; }
  std::set<Label> pending() const;

  std::optional<ProofreadView> next();

 private:
  std::shared_ptr<const SessionState> state_;
  std::optional<Vec3> cursor_;
  std::set<Label> visited_;
};

}  // namespace coda
