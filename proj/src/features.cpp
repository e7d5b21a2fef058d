#include "coda/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include <omp.h>

namespace coda {

// --- FeatureTable -----------------------------------------------------------

void FeatureTable::add_column(std::string name, std::vector<Value> values) {
  if (has_column(name)) throw Error("duplicate column '" + name + "'");
  if (!columns_.empty() && values.size() != rows())
    throw Error("column '" + name + "' has " + std::to_string(values.size()) + " rows, table has " +
                std::to_string(rows()));
  columns_.push_back({std::move(name), std::move(values)});
}

const Column& FeatureTable::column(const std::string& name) const {
  for (const auto& c : columns_)
    if (c.name == name) return c;
  throw Error("no column '" + name + "'");
}

bool FeatureTable::has_column(const std::string& name) const {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
}

// --- CSV --------------------------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

namespace {

bool parse_double(const std::string& s, double& out);

/// Strings that would read back as numbers are quoted so they stay strings.
std::string quote(const std::string& s) {
  double d;
  if (!s.empty() && s.find_first_of(",\"\n\r") == std::string::npos && !parse_double(s, d)) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string cell_text(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) return "";
        if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        if constexpr (std::is_same_v<T, double>) return format_double(x);
        if constexpr (std::is_same_v<T, std::string>) return quote(x);
      },
      v);
}

struct Field {
  std::string text;
  bool quoted = false;
};

std::vector<std::vector<Field>> split_records(const std::string& text) {
  std::vector<std::vector<Field>> rows;
  std::vector<Field> row;
  Field cur;
  bool in_quotes = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cur.text += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cur.text += c;
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      cur.quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cur));
      cur = {};
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(cur));
      rows.push_back(std::move(row));
      row.clear();
      cur = {};
      any = false;
    } else if (c != '\r') {
      cur.text += c;
      any = true;
    }
  }
  if (in_quotes) throw Error("csv: unterminated quote");
  if (any) {
    row.push_back(std::move(cur));
    rows.push_back(std::move(row));
  }
  return rows;
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_double(const std::string& s, double& out) {
  if (s == "nan") {
    out = std::numeric_limits<double>::quiet_NaN();
    return true;
  }
  if (s == "inf" || s == "-inf") {
    out = s[0] == '-' ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    return true;
  }
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::string to_csv(const FeatureTable& t) {
  std::string out;
  const auto& cols = t.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += quote(cols[c].name);
  }
  out += '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ',';
      out += cell_text(cols[c].values[r]);
    }
    out += '\n';
  }
  return out;
}

FeatureTable from_csv(const std::string& text, TableKind kind) {
  const auto records = split_records(text);
  if (records.empty()) throw Error("csv: missing header");
  const auto& header = records.front();
  const std::size_t ncols = header.size();
  for (std::size_t r = 1; r < records.size(); ++r)
    if (records[r].size() != ncols)
      throw Error("csv: row " + std::to_string(r) + " has " + std::to_string(records[r].size()) + " fields, expected " +
                  std::to_string(ncols));

  FeatureTable t(kind);
  for (std::size_t c = 0; c < ncols; ++c) {
    bool all_int = true, all_num = true;
    for (std::size_t r = 1; r < records.size(); ++r) {
      const Field& f = records[r][c];
      if (f.text.empty() && !f.quoted) continue;
      std::int64_t i;
      double d;
      if (f.quoted || !parse_int(f.text, i)) all_int = false;
      if (f.quoted || !parse_double(f.text, d)) all_num = false;
    }
    std::vector<Value> values;
    values.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
      const Field& f = records[r][c];
      if (f.text.empty() && !f.quoted) {
        values.emplace_back(std::monostate{});
      } else if (all_int) {
        std::int64_t i = 0;
        parse_int(f.text, i);
        values.emplace_back(i);
      } else if (all_num) {
        double d = 0;
        parse_double(f.text, d);
        values.emplace_back(d);
      } else {
        values.emplace_back(f.text);
      }
    }
    t.add_column(header[c].text, std::move(values));
  }
  return t;
}

FeatureTable select_rows(const FeatureTable& t, const std::set<std::size_t>& rows) {
  FeatureTable out(t.kind());
  for (const auto& c : t.columns()) {
    std::vector<Value> values;
    for (const std::size_t r : rows) {
      if (r >= t.rows()) throw Error("row " + std::to_string(r) + " out of range");
      values.push_back(c.values[r]);
    }
    out.add_column(c.name, std::move(values));
  }
  return out;
}

// --- features -------------------------------------------------------------------------

std::map<Label, double> surface_areas(const LabelGrid& labels, Exec exec) {
  const Dims d = labels.dims();
  const Spacing sp = labels.spacing();
  using FaceCounts = std::map<Label, std::array<std::int64_t, 3>>;
  auto scan = [&](std::int64_t z, FaceCounts& out) {
    for (std::int64_t y = 0; y < d.ny; ++y)
      for (std::int64_t x = 0; x < d.nx; ++x) {
        const Label l = labels.at(x, y, z);
        if (l == 0) continue;
        const std::int64_t c[3] = {x, y, z};
        for (int ax = 0; ax < 3; ++ax)
          for (int s = -1; s <= 1; s += 2) {
            std::int64_t n[3] = {c[0], c[1], c[2]};
            n[ax] += s;
            if (!labels.inside(n[0], n[1], n[2]) || labels.at(n[0], n[1], n[2]) != l) ++out[l][ax];
          }
      }
  };
  FaceCounts total;
  if (exec == Exec::parallel) {
    std::vector<FaceCounts> part(static_cast<std::size_t>(omp_get_max_threads()));
#pragma omp parallel
    {
      FaceCounts& mine = part[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
      for (std::int64_t z = 0; z < d.nz; ++z) scan(z, mine);
    }
    for (const auto& p : part)
      for (const auto& [l, f] : p)
        for (int ax = 0; ax < 3; ++ax) total[l][ax] += f[ax];
  } else {
    for (std::int64_t z = 0; z < d.nz; ++z) scan(z, total);
  }
  std::map<Label, double> out;
  for (const auto& [l, f] : total)
    out[l] = static_cast<double>(f[0]) * sp.sy * sp.sz + static_cast<double>(f[1]) * sp.sx * sp.sz +
             static_cast<double>(f[2]) * sp.sx * sp.sy;
  return out;
}

double angle_deg(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double budding_angle_deg(const Parabola& mother, const Vec3& source_point, const Parabola& daughter) {
  return angle_deg(mother.tangent(closest_parameter(mother, source_point)), daughter.tangent(daughter.t_min));
}

FeatureTable vertex_features(const LabelGrid& labels, const SkeletonGraph& graph,
                             const std::map<Label, Parabola>& fits, Exec exec) {
  const auto instances = instance_set(labels);
  const auto areas = surface_areas(labels, exec);
  const auto gens = generations(graph);

  std::map<Label, Vec3> centroid_sum;
  for (std::int64_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0) {
      auto [it, fresh] = centroid_sum.try_emplace(labels[i], Vec3::Zero());
      it->second += labels.center(i);
    }
  std::map<Label, std::int64_t> indeg, outdeg;
  for (const auto& [k, e] : graph.edges()) {
    ++outdeg[e.source];
    ++indeg[e.target];
  }

  const double voxel_volume = labels.spacing().voxel_volume();
  std::vector<Value> label, count, volume, area, length, alpha, tmin, tmax, rmean, rstd, rskew, cx, cy, cz, gen, comp,
      in, out, state, degenerate, low_points;
  for (const auto& [v, st] : graph.vertices()) {
    label.emplace_back(static_cast<std::int64_t>(v));
    auto inst = instances.find(v);
    const std::int64_t n = inst == instances.end() ? 0 : inst->second.voxel_count;
    count.emplace_back(n);
    volume.emplace_back(static_cast<double>(n) * voxel_volume);
    area.emplace_back(areas.count(v) ? areas.at(v) : 0.0);
    if (auto f = fits.find(v); f != fits.end()) {
      const Parabola& p = f->second;
      const auto rs = residual_stats(p);
      length.emplace_back(arc_length(p));
      alpha.emplace_back(p.alpha);
      tmin.emplace_back(p.t_min);
      tmax.emplace_back(p.t_max);
      rmean.emplace_back(rs.mean);
      rstd.emplace_back(rs.stddev);
      rskew.emplace_back(rs.skew);
      degenerate.emplace_back(std::int64_t{p.degenerate_line});
      low_points.emplace_back(std::int64_t{p.low_point_count});
    } else {
      for (auto* col : {&length, &alpha, &tmin, &tmax, &rmean, &rstd, &rskew, &degenerate, &low_points})
        col->emplace_back(std::monostate{});
    }
    if (n > 0) {
      const Vec3 c = centroid_sum.at(v) / static_cast<double>(n);
      cx.emplace_back(c.x());
      cy.emplace_back(c.y());
      cz.emplace_back(c.z());
    } else {
      cx.emplace_back(std::monostate{});
      cy.emplace_back(std::monostate{});
      cz.emplace_back(std::monostate{});
    }
    if (auto g = gens.generation.find(v); g != gens.generation.end())
      gen.emplace_back(std::int64_t{g->second});
    else
      gen.emplace_back(std::monostate{});
    comp.emplace_back(std::int64_t{gens.component.at(v)});
    in.emplace_back(indeg[v]);
    out.emplace_back(outdeg[v]);
    state.emplace_back(to_string(st));
  }

  FeatureTable t(TableKind::vertex);
  t.add_column("label", std::move(label));
  t.add_column("voxel_count", std::move(count));
  t.add_column("volume_mm3", std::move(volume));
  t.add_column("surface_area_mm2", std::move(area));
  t.add_column("length_mm", std::move(length));
  t.add_column("alpha", std::move(alpha));
  t.add_column("t_min", std::move(tmin));
  t.add_column("t_max", std::move(tmax));
  t.add_column("residual_mean", std::move(rmean));
  t.add_column("residual_std", std::move(rstd));
  t.add_column("residual_skew", std::move(rskew));
  t.add_column("centroid_x", std::move(cx));
  t.add_column("centroid_y", std::move(cy));
  t.add_column("centroid_z", std::move(cz));
  t.add_column("generation", std::move(gen));
  t.add_column("component", std::move(comp));
  t.add_column("in_degree", std::move(in));
  t.add_column("out_degree", std::move(out));
  t.add_column("state", std::move(state));
  t.add_column("degenerate_line", std::move(degenerate));
  t.add_column("low_point_count", std::move(low_points));
  return t;
}

FeatureTable edge_features(const SkeletonGraph& graph, const std::map<Label, Parabola>& fits) {
  auto opt = [](const std::optional<double>& v) -> Value {
    if (v) return *v;
    return std::monostate{};
  };
  std::vector<Value> si, ti, sl, tl, len, area, width, hs, ht, conf, angle, state, manual, low, directed;
  for (const auto& [k, e] : graph.edges()) {
    si.emplace_back(static_cast<std::int64_t>(graph.vertex_index(e.source)));
    ti.emplace_back(static_cast<std::int64_t>(graph.vertex_index(e.target)));
    sl.emplace_back(static_cast<std::int64_t>(e.source));
    tl.emplace_back(static_cast<std::int64_t>(e.target));
    len.emplace_back(e.length());
    area.emplace_back(e.contact_area);
    width.emplace_back(std::sqrt(e.contact_area));
    hs.emplace_back(opt(e.h_source));
    ht.emplace_back(opt(e.h_target));
    conf.emplace_back(opt(e.confidence));
    auto fm = fits.find(e.source);
    auto fd = fits.find(e.target);
    if (fm != fits.end() && fd != fits.end())
      angle.emplace_back(budding_angle_deg(fm->second, e.source_point, fd->second));
    else
      angle.emplace_back(std::monostate{});
    state.emplace_back(to_string(e.state));
    manual.emplace_back(std::int64_t{e.manual});
    low.emplace_back(std::int64_t{e.low_confidence});
    directed.emplace_back(std::int64_t{e.directed});
  }
  FeatureTable t(TableKind::edge);
  t.add_column("source_index", std::move(si));
  t.add_column("target_index", std::move(ti));
  t.add_column("source_label", std::move(sl));
  t.add_column("target_label", std::move(tl));
  t.add_column("length_mm", std::move(len));
  t.add_column("contact_area_mm2", std::move(area));
  t.add_column("contact_width_mm", std::move(width));
  t.add_column("h_source", std::move(hs));
  t.add_column("h_target", std::move(ht));
  t.add_column("confidence", std::move(conf));
  t.add_column("budding_angle_deg", std::move(angle));
  t.add_column("state", std::move(state));
  t.add_column("manual", std::move(manual));
  t.add_column("low_confidence", std::move(low));
  t.add_column("directed", std::move(directed));
  return t;
}

std::vector<std::size_t> rows_below_volume(const FeatureTable& vertices, double threshold_mm3) {
  std::vector<std::size_t> out;
  const auto& col = vertices.column("volume_mm3").values;
  for (std::size_t r = 0; r < col.size(); ++r)
    if (const double* v = std::get_if<double>(&col[r]); v && *v < threshold_mm3) out.push_back(r);
  return out;
}

LabelGrid remove_small_instances(const LabelGrid& labels, double threshold_mm3) {
  const auto inst = instance_set(labels);
  const double vv = labels.spacing().voxel_volume();
  LabelGrid out = labels;
  for (auto& l : out.storage())
    if (l != 0 && static_cast<double>(inst.at(l).voxel_count) * vv < threshold_mm3) l = 0;
  return out;
}

}  // namespace coda
