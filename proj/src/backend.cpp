#include <sys/wait.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "fgvc/embedding.hpp"
#include "fgvc/error.hpp"

namespace fgvc {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kInputPlaceholder = "{input}";
constexpr std::string_view kOutputPlaceholder = "{output}";

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() {
    std::string templ = (fs::temp_directory_path() / "fgvc-backend-XXXXXX").string();
    if (::mkdtemp(templ.data()) == nullptr) throw IoError("cannot create a temporary directory");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out.empty() ? "_" : out;
}

// Runs one backend process over `paths` and returns its rows in order.
RowMatrix<float> invoke_backend(const BackendDescriptor& backend, const std::vector<fs::path>& paths) {
  TempDir tmp;
  const fs::path list = tmp.path() / "input_list.txt";
  const fs::path output = tmp.path() / "output.femb";
  const fs::path errlog = tmp.path() / "stderr.txt";
  {
    std::ofstream out(list);
    for (const auto& p : paths) out << fs::absolute(p).string() << '\n';
    if (!out) throw IoError("cannot write " + list.string());
  }
  std::string cmd = replace_all(backend.command, kInputPlaceholder, shell_quote(list.string()));
  cmd = replace_all(cmd, kOutputPlaceholder, shell_quote(output.string()));
  cmd = "( " + cmd + " ) </dev/null 2> " + shell_quote(errlog.string());

  const int status = std::system(cmd.c_str());
  const std::string diag = slurp(errlog);
  if (status == -1) throw BackendProtocolError("cannot start backend '" + backend.encoder_id + "'", diag);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw BackendProtocolError("backend '" + backend.encoder_id + "' exited with status " +
                                   std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1),
                               diag);
  if (!fs::exists(output)) throw BackendProtocolError("backend '" + backend.encoder_id + "' wrote no output", diag);

  EmbeddingMatrix m;
  try {
    m = read_embeddings(output);
  } catch (const Error& e) {
    throw BackendProtocolError("backend '" + backend.encoder_id + "' wrote an invalid FGEMB file: " + e.what(), diag);
  }
  if (static_cast<std::size_t>(m.size()) != paths.size())
    throw BackendProtocolError("backend '" + backend.encoder_id + "' returned " + std::to_string(m.size()) +
                                   " rows for " + std::to_string(paths.size()) + " images",
                               diag);
  if (backend.expected_dim && m.dim() != *backend.expected_dim)
    throw BackendProtocolError("backend '" + backend.encoder_id + "' returned dimension " + std::to_string(m.dim()) +
                                   ", expected " + std::to_string(*backend.expected_dim),
                               diag);
  return std::move(m.rows);
}

}  // namespace

BackendDescriptor BackendDescriptor::from_command(std::string command, std::string encoder_id,
                                                  std::optional<std::int64_t> expected_dim) {
  BackendDescriptor d;
  if (command.find(kInputPlaceholder) == std::string::npos && command.find(kOutputPlaceholder) == std::string::npos)
    command += " {input} {output}";
  d.command = std::move(command);
  d.encoder_id = std::move(encoder_id);
  d.expected_dim = expected_dim;
  return d;
}

void BackendDescriptor::validate() const {
  if (command.find(kInputPlaceholder) == std::string::npos || command.find(kOutputPlaceholder) == std::string::npos)
    throw InvalidArgument("backend command must contain {input} and {output}");
  if (encoder_id.empty()) throw InvalidArgument("backend encoder_id is empty");
  if (expected_dim && *expected_dim < 1) throw InvalidArgument("expected_dim must be positive");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

fs::path EmbeddingCache::default_dir() {
  if (const char* env = std::getenv("FGVC_CACHE_DIR"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) return fs::path(xdg) / "fgvc";
  if (const char* home = std::getenv("HOME"); home && *home) return fs::path(home) / ".cache" / "fgvc";
  return fs::temp_directory_path() / "fgvc-cache";
}

fs::path EmbeddingCache::entry_path(const std::string& encoder_id, const std::string& content_hash) const {
  return dir_ / sanitize(encoder_id) / (content_hash + ".femb");
}

std::optional<Eigen::VectorXf> EmbeddingCache::lookup(const std::string& encoder_id,
                                                      const std::string& content_hash) const {
  const auto p = entry_path(encoder_id, content_hash);
  std::error_code ec;
  if (!fs::exists(p, ec)) return std::nullopt;
  try {
    auto m = read_embeddings(p);
    if (m.size() != 1 || m.encoder_id != encoder_id) return std::nullopt;
    return Eigen::VectorXf(m.rows.row(0).transpose());
  } catch (const Error&) {
    return std::nullopt;
  }
}

void EmbeddingCache::store(const std::string& encoder_id, const std::string& content_hash,
                           const Eigen::VectorXf& row) const {
  const auto p = entry_path(encoder_id, content_hash);
  fs::create_directories(p.parent_path());
  EmbeddingMatrix m;
  m.rows = row.transpose();
  m.row_ids = {{content_hash, 0}};
  m.encoder_id = encoder_id;
  write_embeddings(m, p);
}

EmbeddingMatrix run_backend(const BackendDescriptor& backend, std::span<const ImageInput> images,
                            const BackendOptions& options, BackendStats* stats) {
  backend.validate();
  BackendStats local;
  BackendStats& st = stats ? *stats : local;

  std::vector<std::string> hashes;
  hashes.reserve(images.size());
  for (const auto& img : images) {
    if (!fs::is_regular_file(img.path)) throw IoError("image not found: " + img.path.string());
    hashes.push_back(file_sha256(img.path));
  }

  std::map<std::string, Eigen::VectorXf> rows_by_hash;
  std::vector<std::string> pending_hashes;
  std::vector<fs::path> pending_paths;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& h = hashes[i];
    if (rows_by_hash.count(h)) continue;
    if (options.cache) {
      if (auto row = options.cache->lookup(backend.encoder_id, h);
          row && (!backend.expected_dim || row->size() == *backend.expected_dim)) {
        rows_by_hash.emplace(h, std::move(*row));
        ++st.cache_hits;
        continue;
      }
    }
    if (std::find(pending_hashes.begin(), pending_hashes.end(), h) != pending_hashes.end()) continue;
    pending_hashes.push_back(h);
    pending_paths.push_back(images[i].path);
  }

  if (!pending_paths.empty()) {
    const std::size_t batches = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.jobs, 1)), 1,
                                                        pending_paths.size());
    std::vector<std::vector<fs::path>> batch_paths(batches);
    std::vector<std::size_t> batch_begin(batches + 1, 0);
    for (std::size_t b = 0; b <= batches; ++b) batch_begin[b] = b * pending_paths.size() / batches;
    for (std::size_t b = 0; b < batches; ++b)
      batch_paths[b].assign(pending_paths.begin() + static_cast<std::ptrdiff_t>(batch_begin[b]),
                            pending_paths.begin() + static_cast<std::ptrdiff_t>(batch_begin[b + 1]));

    std::vector<RowMatrix<float>> results(batches);
    std::vector<std::exception_ptr> errors(batches);
    auto work = [&](std::size_t b) {
      try {
        results[b] = invoke_backend(backend, batch_paths[b]);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    };
    if (batches == 1) {
      work(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t b = 0; b < batches; ++b) threads.emplace_back(work, b);
      for (auto& t : threads) t.join();
    }
    st.invocations += batches;
    st.images_sent += pending_paths.size();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    for (std::size_t b = 0; b < batches; ++b) {
      if (results[b].cols() != results[0].cols())
        throw BackendProtocolError("backend '" + backend.encoder_id + "' changed dimension between batches", "");
      for (Eigen::Index r = 0; r < results[b].rows(); ++r) {
        const auto& h = pending_hashes[batch_begin[b] + static_cast<std::size_t>(r)];
        Eigen::VectorXf row = results[b].row(r).transpose();
        if (options.cache) options.cache->store(backend.encoder_id, h, row);
        rows_by_hash.emplace(h, std::move(row));
      }
    }
  }

  EmbeddingMatrix out;
  out.encoder_id = backend.encoder_id;
  out.modality = options.modality;
  out.config_hash = options.config_hash;
  const Eigen::Index dim = images.empty() ? backend.expected_dim.value_or(1) : rows_by_hash.at(hashes[0]).size();
  out.rows.resize(static_cast<Eigen::Index>(images.size()), dim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& row = rows_by_hash.at(hashes[i]);
    if (row.size() != dim)
      throw BackendProtocolError("embedding dimension differs between cached and fresh rows for '" +
                                     backend.encoder_id + "'; clear the cache",
                                 "");
    out.rows.row(static_cast<Eigen::Index>(i)) = row.transpose();
    out.row_ids.push_back(images[i].row_id);
  }
  out.validate();
  return out;
}

}  // namespace fgvc
