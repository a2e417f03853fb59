#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace fgvc {

enum class Modality { Rgb, Depth, Rgbd };

std::string to_string(Modality m);
Modality parse_modality(const std::string& name);

/// Identity of one row: which view of which instance it describes.
struct RowId {
  std::string instance;
  std::int64_t view = 0;

  friend auto operator<=>(const RowId&, const RowId&) = default;
  friend bool operator==(const RowId&, const RowId&) = default;
};

std::string to_string(const RowId& id);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-per-view feature vectors plus provenance.
struct EmbeddingMatrix {
  RowMatrix<float> rows;
  std::vector<RowId> row_ids;
  std::string encoder_id;
  Modality modality = Modality::Rgb;
  std::string config_hash;  ///< provenance of the run that produced the file, may be empty
  std::map<std::string, std::string> provenance;  ///< free-form notes, e.g. the applied fusion

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }

  /// Row count matches row_ids, dim >= 1, finite values, unique ids.
  /// Throws FormatError.
  void validate() const;

  /// Row index for each id; throws AlignmentError when one is absent.
  std::vector<Eigen::Index> index_of(std::span<const RowId> ids) const;
};

bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

// ---------------------------------------------------------------------------
// FGEMB files:
//   "FGEMB1\0" | u8 version=1 | u32 N | u32 D | N*D float32 | u32 len | JSON trailer
// All integers and floats little-endian.

std::string encode_fgemb(const EmbeddingMatrix& m);
EmbeddingMatrix decode_fgemb(std::string_view bytes);

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// ---------------------------------------------------------------------------
// External encoder backends.

/// `command` is a shell template holding the `{input}` and `{output}`
/// placeholders; the input is a text file with one image path per line.
struct BackendDescriptor {
  std::string command;
  std::string encoder_id;
  std::optional<std::int64_t> expected_dim;

  /// Appends ` {input} {output}` to a bare command line.
  static BackendDescriptor from_command(std::string command, std::string encoder_id,
                                        std::optional<std::int64_t> expected_dim = std::nullopt);

  void validate() const;
};

struct ImageInput {
  std::filesystem::path path;
  RowId row_id;
};

/// Content-addressed store of single-row embeddings keyed by
/// (encoder_id, SHA-256 of the image bytes). One writer at a time; entries
/// appear through atomic rename so readers never see partial files.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  /// $FGVC_CACHE_DIR, else $XDG_CACHE_HOME/fgvc, else ~/.cache/fgvc.
  static std::filesystem::path default_dir();

  std::optional<Eigen::VectorXf> lookup(const std::string& encoder_id, const std::string& content_hash) const;
  void store(const std::string& encoder_id, const std::string& content_hash, const Eigen::VectorXf& row) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& encoder_id, const std::string& content_hash) const;
  std::filesystem::path dir_;
};

struct BackendOptions {
  Modality modality = Modality::Rgb;
  const EmbeddingCache* cache = nullptr;  ///< nullptr disables caching
  int jobs = 1;                           ///< concurrent backend processes on disjoint batches
  std::string config_hash;
};

struct BackendStats {
  std::size_t invocations = 0;   ///< backend processes started
  std::size_t cache_hits = 0;    ///< images served from the cache
  std::size_t images_sent = 0;   ///< images handed to the backend
};

/// Embeds `images` through the backend, one row per image in input order.
/// Identical image contents are encoded once. Throws BackendProtocolError.
EmbeddingMatrix run_backend(const BackendDescriptor& backend, std::span<const ImageInput> images,
                            const BackendOptions& options = {}, BackendStats* stats = nullptr);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace fgvc
