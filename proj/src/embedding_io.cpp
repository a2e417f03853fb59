#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <unistd.h>

#include <json.hpp>

#include "fgvc/embedding.hpp"
#include "fgvc/error.hpp"

namespace fgvc {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[7] = {'F', 'G', 'E', 'M', 'B', '1', '\0'};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderSize = 7 + 1 + 4 + 4;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Depth: return "depth";
    case Modality::Rgbd: return "rgbd";
  }
  return "rgb";
}

Modality parse_modality(const std::string& name) {
  if (name == "rgb") return Modality::Rgb;
  if (name == "depth") return Modality::Depth;
  if (name == "rgbd") return Modality::Rgbd;
  throw InvalidArgument("unknown modality '" + name + "' (rgb|depth|rgbd)");
}

std::string to_string(const RowId& id) { return id.instance + "#" + std::to_string(id.view); }

void EmbeddingMatrix::validate() const {
  if (static_cast<std::size_t>(rows.rows()) != row_ids.size())
    throw FormatError("row count " + std::to_string(rows.rows()) + " does not match " +
                      std::to_string(row_ids.size()) + " row ids");
  if (rows.cols() < 1) throw FormatError("embedding dimension must be at least 1");
  if (!rows.allFinite()) throw FormatError("embedding holds non-finite values");
  std::vector<RowId> sorted = row_ids;
  std::sort(sorted.begin(), sorted.end());
  auto dup = std::adjacent_find(sorted.begin(), sorted.end());
  if (dup != sorted.end()) throw FormatError("duplicate row id " + to_string(*dup));
}

std::vector<Eigen::Index> EmbeddingMatrix::index_of(std::span<const RowId> ids) const {
  std::map<RowId, Eigen::Index> pos;
  for (std::size_t i = 0; i < row_ids.size(); ++i) pos.emplace(row_ids[i], static_cast<Eigen::Index>(i));
  std::vector<Eigen::Index> out;
  std::vector<std::string> missing;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) {
      missing.push_back(to_string(id));
      out.push_back(-1);
    } else {
      out.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 10) list += ", ...";
    throw AlignmentError(std::to_string(missing.size()) + " row ids missing from '" + encoder_id + "': " + list,
                         std::move(missing));
  }
  return out;
}

bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.rows.rows() != b.rows.rows() || a.rows.cols() != b.rows.cols()) return false;
  if (a.rows.size() > 0 &&
      std::memcmp(a.rows.data(), b.rows.data(), sizeof(float) * static_cast<std::size_t>(a.rows.size())) != 0)
    return false;
  return a.row_ids == b.row_ids && a.encoder_id == b.encoder_id && a.modality == b.modality &&
         a.config_hash == b.config_hash && a.provenance == b.provenance;
}

std::string encode_fgemb(const EmbeddingMatrix& m) {
  m.validate();
  const auto n = static_cast<std::uint32_t>(m.rows.rows());
  const auto d = static_cast<std::uint32_t>(m.rows.cols());
  std::string out;
  out.reserve(kHeaderSize + static_cast<std::size_t>(n) * d * 4 + 64 + m.row_ids.size() * 32);
  out.append(kMagic, sizeof kMagic);
  out.push_back(static_cast<char>(kVersion));
  put_u32(out, n);
  put_u32(out, d);
  for (Eigen::Index r = 0; r < m.rows.rows(); ++r)
    for (Eigen::Index c = 0; c < m.rows.cols(); ++c) put_u32(out, std::bit_cast<std::uint32_t>(m.rows(r, c)));

  json trailer;
  trailer["encoder_id"] = m.encoder_id;
  trailer["modality"] = to_string(m.modality);
  trailer["row_ids"] = json::array();
  for (const auto& id : m.row_ids) trailer["row_ids"].push_back(json{{"instance", id.instance}, {"view", id.view}});
  if (!m.config_hash.empty()) trailer["config_hash"] = m.config_hash;
  if (!m.provenance.empty()) trailer["provenance"] = m.provenance;
  const std::string text = trailer.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  return out;
}

EmbeddingMatrix decode_fgemb(std::string_view bytes) {
  if (bytes.size() >= sizeof kMagic && std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("bad FGEMB magic");
  if (bytes.size() < kHeaderSize) throw TruncationError("FGEMB header truncated");
  if (static_cast<std::uint8_t>(bytes[7]) != kVersion)
    throw FormatError("unsupported FGEMB version " + std::to_string(static_cast<unsigned char>(bytes[7])));
  const std::uint32_t n = get_u32(bytes, 8);
  const std::uint32_t d = get_u32(bytes, 12);
  if (d == 0) throw FormatError("FGEMB dimension is zero");

  const std::uint64_t payload = static_cast<std::uint64_t>(n) * d * 4;
  if (bytes.size() - kHeaderSize < payload) {
    const auto have_rows = (bytes.size() - kHeaderSize) / (static_cast<std::uint64_t>(d) * 4);
    throw TruncationError("FGEMB header declares " + std::to_string(n) + " rows, payload holds " +
                          std::to_string(have_rows));
  }
  EmbeddingMatrix m;
  m.rows.resize(n, d);
  std::size_t at = kHeaderSize;
  for (std::uint32_t r = 0; r < n; ++r)
    for (std::uint32_t c = 0; c < d; ++c, at += 4) m.rows(r, c) = std::bit_cast<float>(get_u32(bytes, at));

  if (bytes.size() - at < 4) throw TruncationError("FGEMB trailer length missing");
  const std::uint32_t len = get_u32(bytes, at);
  at += 4;
  if (bytes.size() - at < len) throw TruncationError("FGEMB trailer truncated");
  if (bytes.size() - at > len) throw FormatError("trailing bytes after FGEMB trailer");

  try {
    const auto trailer = json::parse(bytes.substr(at, len));
    m.encoder_id = trailer.at("encoder_id").get<std::string>();
    m.modality = parse_modality(trailer.at("modality").get<std::string>());
    for (const auto& jid : trailer.at("row_ids")) {
      if (jid.is_string())
        m.row_ids.push_back({jid.get<std::string>(), 0});
      else
        m.row_ids.push_back({jid.at("instance").get<std::string>(), jid.at("view").get<std::int64_t>()});
    }
    if (trailer.contains("config_hash")) m.config_hash = trailer["config_hash"].get<std::string>();
    if (trailer.contains("provenance"))
      m.provenance = trailer["provenance"].get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed FGEMB trailer: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed FGEMB trailer: ") + e.what());
  }
  if (m.row_ids.size() != n)
    throw FormatError("FGEMB trailer lists " + std::to_string(m.row_ids.size()) + " row ids for " + std::to_string(n) +
                      " rows");
  m.validate();
  return m;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code mk;
    fs::create_directories(path.parent_path(), mk);
  }
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

void write_embeddings(const EmbeddingMatrix& m, const fs::path& path) { write_file_atomic(path, encode_fgemb(m)); }

EmbeddingMatrix read_embeddings(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_fgemb(ss.str());
  } catch (const TruncationError& e) {
    throw TruncationError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace fgvc
