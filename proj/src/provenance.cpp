#include "fgvc/provenance.hpp"

#include "fgvc/embedding.hpp"

namespace fgvc {

std::string config_hash(const nlohmann::ordered_json& config) { return sha256_hex(config.dump()).substr(0, 16); }

}  // namespace fgvc
