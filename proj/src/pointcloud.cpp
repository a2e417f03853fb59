#include "fgvc/pointcloud.hpp"

#include "fgvc/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string_view>
#include <tuple>

#include <json.hpp>

#include "fgvc/error.hpp"

namespace fgvc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

enum Field { X, Y, Z, Red, Green, Blue, FieldCount };

int field_of(std::string_view name) {
  static constexpr std::string_view names[] = {"x", "y", "z", "red", "green", "blue"};
  for (int f = 0; f < FieldCount; ++f)
    if (names[f] == name) return f;
  return -1;
}

bool is_float_type(std::string_view t) { return t == "float" || t == "float32" || t == "double" || t == "float64"; }
bool is_uchar_type(std::string_view t) { return t == "uchar" || t == "uint8"; }

}  // namespace

PointCloudView parse_view(const std::string& text) {
  using K = ParseError::Kind;
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      auto nl = rest.find('\n');
      lines.push_back(rest.substr(0, nl));
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }

  std::size_t ln = 0;
  auto next_header = [&]() -> std::vector<std::string_view> {
    while (ln < lines.size()) {
      auto toks = split_ws(lines[ln++]);
      if (toks.empty()) continue;
      if (toks[0] == "comment" || toks[0] == "obj_info") continue;
      return toks;
    }
    throw ParseError(K::MalformedHeader, ln, "unexpected end of file inside header");
  };

  auto toks = next_header();
  if (toks.size() != 1 || toks[0] != "ply") throw ParseError(K::MalformedHeader, ln, "missing 'ply' magic line");
  toks = next_header();
  if (toks.size() != 3 || toks[0] != "format" || toks[1] != "ascii" || toks[2] != "1.0")
    throw ParseError(K::MalformedHeader, ln, "only 'format ascii 1.0' is supported");
  toks = next_header();
  if (toks.size() != 3 || toks[0] != "element" || toks[1] != "vertex")
    throw ParseError(K::MalformedHeader, ln, "expected 'element vertex N'");
  std::size_t count = 0;
  {
    auto [p, ec] = std::from_chars(toks[2].data(), toks[2].data() + toks[2].size(), count);
    if (ec != std::errc() || p != toks[2].data() + toks[2].size())
      throw ParseError(K::MalformedHeader, ln, "bad vertex count '" + std::string(toks[2]) + "'");
  }

  int column_field[FieldCount];
  bool seen[FieldCount] = {};
  int columns = 0;
  for (;;) {
    toks = next_header();
    if (toks.size() == 1 && toks[0] == "end_header") break;
    if (toks.size() != 3 || toks[0] != "property")
      throw ParseError(K::MalformedHeader, ln, "unsupported header line '" + std::string(lines[ln - 1]) + "'");
    int f = field_of(toks[2]);
    if (f < 0) throw ParseError(K::MalformedHeader, ln, "unsupported property '" + std::string(toks[2]) + "'");
    bool type_ok = f <= Z ? is_float_type(toks[1]) : is_uchar_type(toks[1]);
    if (!type_ok)
      throw ParseError(K::MalformedHeader, ln,
                       "property '" + std::string(toks[2]) + "' has unsupported type '" + std::string(toks[1]) + "'");
    if (seen[f]) throw ParseError(K::MalformedHeader, ln, "duplicate property '" + std::string(toks[2]) + "'");
    if (columns == FieldCount) throw ParseError(K::MalformedHeader, ln, "too many properties");
    seen[f] = true;
    column_field[columns++] = f;
  }
  if (columns != FieldCount) throw ParseError(K::MalformedHeader, ln, "header must declare x, y, z, red, green, blue");
  if (count == 0) throw ParseError(K::EmptyCloud, ln, "cloud has no vertices");

  PointCloudView view;
  view.points.resize(3, static_cast<Eigen::Index>(count));
  view.colors.resize(3, static_cast<Eigen::Index>(count));
  std::size_t read = 0;
  for (; ln < lines.size(); ++ln) {
    auto rec = split_ws(lines[ln]);
    if (rec.empty()) continue;
    const std::size_t line_no = ln + 1;
    if (read == count) throw ParseError(K::MalformedRecord, line_no, "more records than the declared vertex count");
    if (rec.size() != FieldCount)
      throw ParseError(K::MalformedRecord, line_no,
                       "expected 6 values, found " + std::to_string(rec.size()));
    const auto col = static_cast<Eigen::Index>(read);
    for (int c = 0; c < FieldCount; ++c) {
      const int f = column_field[c];
      const char* first = rec[c].data();
      const char* last = first + rec[c].size();
      if (f <= Z) {
        float v = 0.0f;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec == std::errc::result_out_of_range)
          throw ParseError(K::NonFiniteCoordinate, line_no, "coordinate out of float range");
        if (ec != std::errc() || p != last)
          throw ParseError(K::MalformedRecord, line_no, "bad coordinate '" + std::string(rec[c]) + "'");
        if (!std::isfinite(v)) throw ParseError(K::NonFiniteCoordinate, line_no, "non-finite coordinate");
        view.points(f, col) = v;
      } else {
        unsigned v = 0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || p != last || v > 255)
          throw ParseError(K::MalformedRecord, line_no, "color channel must be an integer in [0,255]");
        view.colors(f - Red, col) = static_cast<std::uint8_t>(v);
      }
    }
    ++read;
  }
  if (read != count)
    throw ParseError(K::MalformedRecord, lines.size(),
                     "declared " + std::to_string(count) + " vertices, found " + std::to_string(read));
  return view;
}

PointCloudView load_view(const fs::path& path) {
  try {
    return parse_view(read_file(path));
  } catch (const ParseError& e) {
    throw e.with_context(path.string());
  }
}

std::string format_view(const PointCloudView& view) {
  std::string out;
  out.reserve(64 + view.size() * 40);
  out += "ply\nformat ascii 1.0\nelement vertex " + std::to_string(view.size()) +
         "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char buf[64];
  for (Eigen::Index i = 0; i < view.points.cols(); ++i) {
    for (int r = 0; r < 3; ++r) {
      auto res = std::to_chars(buf, buf + sizeof buf, view.points(r, i));
      out.append(buf, res.ptr);
      out += ' ';
    }
    for (int r = 0; r < 3; ++r) {
      out += std::to_string(view.colors(r, i));
      out += r == 2 ? '\n' : ' ';
    }
  }
  return out;
}

void write_view(const PointCloudView& view, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_view(view);
  if (!out) throw IoError("write failed: " + path.string());
}

void admit_view(const PointCloudView& view, std::size_t min_points) {
  if (view.size() < min_points)
    throw ParseError(ParseError::Kind::TooFewPoints, 0,
                     "view " + view.instance_id + "#" + std::to_string(view.view_index) + " has " +
                         std::to_string(view.size()) + " points, need at least " + std::to_string(min_points));
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

bool entry_less(const ManifestEntry& a, const ManifestEntry& b) {
  return std::tie(a.category, a.instance, a.view, a.path) < std::tie(b.category, b.instance, b.view, b.path);
}

std::optional<std::int64_t> trailing_index(const std::string& stem) {
  std::size_t end = stem.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  if (begin == end) return std::nullopt;
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(stem.data() + begin, stem.data() + end, v);
  if (ec != std::errc()) return std::nullopt;
  return v;
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool want_dirs) {
  std::vector<fs::path> out;
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw DatasetError(DatasetError::Kind::Unreadable, "cannot read directory " + dir.string() + ": " + ec.message());
  for (const auto& e : it) {
    if (e.path().filename().string().starts_with('.')) continue;
    if (want_dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void DatasetManifest::validate() const {
  using K = DatasetError::Kind;
  std::set<std::pair<std::string, std::int64_t>> seen;
  std::set<std::string> cats;
  for (const auto& e : entries) {
    if (e.view < 0) throw DatasetError(K::Invalid, "negative view index for " + e.path);
    if (!seen.emplace(e.instance, e.view).second)
      throw DatasetError(K::DuplicateEntry,
                         "duplicate (instance, view) pair (" + e.instance + ", " + std::to_string(e.view) + ")");
    cats.insert(e.category);
  }
  if (std::vector<std::string>(cats.begin(), cats.end()) != categories)
    throw DatasetError(K::Invalid, "category list does not match the entries");
}

DatasetManifest build_manifest(const fs::path& root_dir, const ManifestLayout& layout, const std::string& name) {
  using K = DatasetError::Kind;
  if (!fs::is_directory(root_dir)) throw DatasetError(K::Unreadable, "not a directory: " + root_dir.string());

  DatasetManifest m;
  m.name = name.empty() ? root_dir.filename().string() : name;
  if (m.name.empty()) m.name = fs::absolute(root_dir).lexically_normal().parent_path().filename().string();

  for (const auto& cat_dir : sorted_children(root_dir, true)) {
    for (const auto& inst_dir : sorted_children(cat_dir, true)) {
      for (const auto& file : sorted_children(inst_dir, false)) {
        if (file.extension() != layout.extension) continue;
        auto view = trailing_index(file.stem().string());
        if (!view) throw DatasetError(K::Invalid, "cannot read a view index from " + file.string());
        ManifestEntry e;
        e.path = file.lexically_relative(root_dir).generic_string();
        e.category = cat_dir.filename().string();
        e.instance = inst_dir.filename().string();
        e.view = *view;
        m.entries.push_back(std::move(e));
      }
    }
  }
  if (m.entries.empty()) throw DatasetError(K::EmptyDataset, "no '" + layout.extension + "' views under " + root_dir.string());

  std::sort(m.entries.begin(), m.entries.end(), entry_less);
  std::set<std::string> cats;
  for (const auto& e : m.entries) cats.insert(e.category);
  m.categories.assign(cats.begin(), cats.end());
  m.validate();
  return m;
}

DatasetManifest rebase_manifest(DatasetManifest manifest, const fs::path& from_dir, const fs::path& manifest_dir) {
  const auto from = fs::weakly_canonical(fs::absolute(from_dir));
  const auto to = fs::weakly_canonical(fs::absolute(manifest_dir));
  for (auto& e : manifest.entries) e.path = (from / e.path).lexically_normal().lexically_relative(to).generic_string();
  return manifest;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["categories"] = m.categories;
  j["entries"] = json::array();
  for (const auto& e : m.entries)
    j["entries"].push_back(json{{"path", e.path}, {"category", e.category}, {"instance", e.instance}, {"view", e.view}});
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  using K = DatasetError::Kind;
  DatasetManifest m;
  try {
    auto j = json::parse(text);
    m.name = j.at("name").get<std::string>();
    m.categories = j.at("categories").get<std::vector<std::string>>();
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.path = je.at("path").get<std::string>();
      e.category = je.at("category").get<std::string>();
      e.instance = je.at("instance").get<std::string>();
      e.view = je.at("view").get<std::int64_t>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DatasetError(K::Invalid, std::string("malformed manifest: ") + e.what());
  }
  if (m.entries.empty()) throw DatasetError(K::EmptyDataset, "manifest has no entries");
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file_atomic(path, manifest_to_json(manifest));
}

DatasetManifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_json(read_file(path));
  } catch (const DatasetError& e) {
    throw DatasetError(e.kind(), path.string() + ": " + e.what());
  }
}

PointCloudView load_entry(const ManifestEntry& entry, const fs::path& manifest_dir) {
  auto view = load_view(manifest_dir / entry.path);
  view.category_label = entry.category;
  view.instance_id = entry.instance;
  view.view_index = entry.view;
  return view;
}

}  // namespace fgvc
