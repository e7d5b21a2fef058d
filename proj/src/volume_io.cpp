#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "coda/volume.hpp"

namespace coda {
namespace fs = std::filesystem;
using nlohmann::json;

InstanceSet instance_set(const LabelGrid& labels) {
  InstanceSet out;
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    const Label l = labels[i];
    if (l == 0) continue;
    const auto c = labels.coords(i);
    auto [it, fresh] = out.try_emplace(l);
    InstanceInfo& info = it->second;
    if (fresh) {
      info.bbox_min = c;
      info.bbox_max = c;
    }
    ++info.voxel_count;
    for (int a = 0; a < 3; ++a) {
      info.bbox_min[a] = std::min(info.bbox_min[a], c[a]);
      info.bbox_max[a] = std::max(info.bbox_max[a], c[a]);
    }
  }
  return out;
}

std::map<Label, std::vector<std::int64_t>> voxels_by_label(const LabelGrid& labels) {
  std::map<Label, std::vector<std::int64_t>> out;
  for (std::int64_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0) out[labels[i]].push_back(i);
  return out;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
const char* dtype_name() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return "u8";
  if constexpr (std::is_same_v<T, Label>) return "u32";
  if constexpr (std::is_same_v<T, float>) return "f32";
}

template <class T>
void swap_bytes(std::vector<T>& v) {
  if constexpr (sizeof(T) > 1) {
    for (auto& x : v) {
      unsigned char b[sizeof(T)];
      std::memcpy(b, &x, sizeof(T));
      std::reverse(b, b + sizeof(T));
      std::memcpy(&x, b, sizeof(T));
    }
  }
}

fs::path raw_path_for(const fs::path& header) {
  fs::path p = header;
  p.replace_extension(".raw");
  return p;
}

template <class T>
void write_impl(const fs::path& header_path, const Grid<T>& g) {
  const fs::path raw = raw_path_for(header_path);
  json h;
  h["dims"] = {g.dims().nx, g.dims().ny, g.dims().nz};
  h["spacing_mm"] = {g.spacing().sx, g.spacing().sy, g.spacing().sz};
  h["dtype"] = dtype_name<T>();
  h["order"] = "x-fastest";
  h["data"] = raw.filename().string();
  {
    std::ofstream out(header_path);
    if (!out) throw Error("cannot write " + header_path.string());
    out << h.dump(2) << '\n';
  }
  std::vector<T> payload = g.storage();
  if constexpr (std::endian::native == std::endian::big) swap_bytes(payload);
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw Error("cannot write " + raw.string());
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(T)));
  if (!out) throw Error("short write to " + raw.string());
}

template <class T>
Grid<T> read_payload(const fs::path& raw, Dims dims, Spacing sp) {
  Grid<T> g(dims, sp);
  std::ifstream in(raw, std::ios::binary);
  if (!in) throw Error("cannot open " + raw.string());
  const auto bytes = static_cast<std::streamsize>(g.storage().size() * sizeof(T));
  in.read(reinterpret_cast<char*>(g.storage().data()), bytes);
  if (in.gcount() != bytes) throw Error("volume payload too short: " + raw.string());
  if (in.peek() != std::char_traits<char>::eof()) throw Error("volume payload too long: " + raw.string());
  if constexpr (std::endian::native == std::endian::big) swap_bytes(g.storage());
  return g;
}

}  // namespace

void write_volume(const fs::path& p, const MaskGrid& g) { write_impl(p, g); }
void write_volume(const fs::path& p, const LabelGrid& g) { write_impl(p, g); }
void write_volume(const fs::path& p, const ScalarGrid& g) { write_impl(p, g); }

AnyGrid read_volume(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw Error("cannot open " + header_path.string());
  json h;
  try {
    in >> h;
  } catch (const json::exception& e) {
    throw Error("bad volume header " + header_path.string() + ": " + e.what());
  }
  try {
    if (h.value("order", "x-fastest") != "x-fastest") throw Error("unsupported voxel order");
    const auto d = h.at("dims");
    const auto s = h.at("spacing_mm");
    const Dims dims{d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>(), d.at(2).get<std::int64_t>()};
    const Spacing sp{s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
    fs::path raw = raw_path_for(header_path);
    if (h.contains("data")) raw = header_path.parent_path() / h["data"].get<std::string>();
    const std::string dtype = h.at("dtype").get<std::string>();
    if (dtype == "u8") return read_payload<std::uint8_t>(raw, dims, sp);
    if (dtype == "u32") return read_payload<Label>(raw, dims, sp);
    if (dtype == "f32") return read_payload<float>(raw, dims, sp);
    throw Error("unknown dtype '" + dtype + "'");
  } catch (const json::exception& e) {
    throw Error("bad volume header " + header_path.string() + ": " + e.what());
  }
}

MaskGrid read_mask(const fs::path& p) {
  auto g = read_volume(p);
  if (auto* m = std::get_if<MaskGrid>(&g)) {
    for (auto& v : m->storage()) v = v ? 1 : 0;
    return std::move(*m);
  }
  if (auto* l = std::get_if<LabelGrid>(&g)) {
    MaskGrid m(l->dims(), l->spacing(), 0);
    for (std::int64_t i = 0; i < l->size(); ++i) m[i] = (*l)[i] != 0;
    return m;
  }
  throw Error(p.string() + ": expected a u8 mask or u32 labels");
}

LabelGrid read_labels(const fs::path& p) {
  auto g = read_volume(p);
  if (auto* l = std::get_if<LabelGrid>(&g)) return std::move(*l);
  if (auto* m = std::get_if<MaskGrid>(&g)) {
    LabelGrid l(m->dims(), m->spacing(), 0);
    for (std::int64_t i = 0; i < m->size(); ++i) l[i] = (*m)[i];
    return l;
  }
  throw Error(p.string() + ": expected u32 labels");
}

ScalarGrid read_scalar(const fs::path& p) {
  auto g = read_volume(p);
  if (auto* s = std::get_if<ScalarGrid>(&g)) return std::move(*s);
  throw Error(p.string() + ": expected an f32 field");
}

}  // namespace coda
