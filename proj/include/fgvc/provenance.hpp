#pragma once

#include <string>

#include <json.hpp>

namespace fgvc {

/// Short hex digest of the canonical dump of `config`. Stamped on every
/// artifact a CLI run writes.
std::string config_hash(const nlohmann::ordered_json& config);

}  // namespace fgvc
