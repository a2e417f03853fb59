#include "fgvc/fusion.hpp"

#include <set>

#include <json.hpp>

namespace fgvc {

using json = nlohmann::ordered_json;

std::string to_string(FusionOp op) {
  switch (op) {
    case FusionOp::Average: return "average";
    case FusionOp::Max: return "max";
    case FusionOp::Append: return "append";
  }
  return "append";
}

FusionOp parse_fusion_op(const std::string& name) {
  if (name == "average" || name == "avg") return FusionOp::Average;
  if (name == "max") return FusionOp::Max;
  if (name == "append" || name == "concat") return FusionOp::Append;
  throw InvalidArgument("unknown fusion operator '" + name + "' (average|max|append)");
}

std::string to_string(const Branch& b) { return b.encoder_id + "(" + to_string(b.modality) + ")"; }

void PipelineSpec::validate() const {
  if (branches.size() < 2) throw InvalidArgument("pipeline '" + name + "' needs at least two branches");
  std::set<Branch> seen;
  for (const auto& b : branches) {
    if (b.encoder_id.empty()) throw InvalidArgument("pipeline '" + name + "' has a branch without encoder");
    if (!seen.insert(b).second) throw InvalidArgument("pipeline '" + name + "' repeats branch " + to_string(b));
  }
}

PipelineSpec approach_one(const std::string& vit, const std::string& cnn, FusionOp op) {
  return {"approach-1", {{vit, Modality::Rgb}, {cnn, Modality::Depth}}, op};
}

PipelineSpec approach_two(const std::string& vit, const std::string& cnn, FusionOp op) {
  return {"approach-2", {{vit, Modality::Rgb}, {cnn, Modality::Rgb}, {cnn, Modality::Depth}}, op};
}

std::string spec_to_json(const PipelineSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["branches"] = json::array();
  for (const auto& b : spec.branches) j["branches"].push_back({{"encoder", b.encoder_id}, {"modality", to_string(b.modality)}});
  j["fusion"] = to_string(spec.fusion);
  return j.dump(2) + "\n";
}

PipelineSpec spec_from_json(const std::string& text) {
  PipelineSpec spec;
  try {
    const auto j = json::parse(text);
    spec.name = j.at("name").get<std::string>();
    for (const auto& jb : j.at("branches"))
      spec.branches.push_back({jb.at("encoder").get<std::string>(), parse_modality(jb.at("modality").get<std::string>())});
    spec.fusion = parse_fusion_op(j.at("fusion").get<std::string>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed pipeline spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

FusionResult fuse_dataset(const PipelineSpec& spec, const std::map<Branch, EmbeddingMatrix>& matrices) {
  spec.validate();
  std::vector<const EmbeddingMatrix*> inputs;
  for (const auto& b : spec.branches) {
    auto it = matrices.find(b);
    if (it == matrices.end()) throw InvalidArgument("no embeddings supplied for branch " + to_string(b));
    inputs.push_back(&it->second);
  }

  const EmbeddingMatrix& lead = *inputs.front();
  std::vector<std::vector<Eigen::Index>> order;
  for (const auto* m : inputs) {
    if (m->size() != lead.size()) {
      // Report the ids that one side lacks.
      std::set<RowId> a(lead.row_ids.begin(), lead.row_ids.end());
      std::set<RowId> b(m->row_ids.begin(), m->row_ids.end());
      std::vector<std::string> missing;
      for (const auto& id : a)
        if (!b.count(id)) missing.push_back(m->encoder_id + ":" + to_string(id));
      for (const auto& id : b)
        if (!a.count(id)) missing.push_back(lead.encoder_id + ":" + to_string(id));
      std::string list;
      for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
      throw AlignmentError("branch row sets differ: " + list, std::move(missing));
    }
    order.push_back(m->index_of(lead.row_ids));
  }

  FusionResult result;
  result.applied = spec.fusion;
  if (spec.fusion != FusionOp::Append) {
    for (const auto* m : inputs) {
      if (m->dim() != lead.dim()) {
        result.applied = FusionOp::Append;
        std::string dims;
        for (std::size_t k = 0; k < inputs.size(); ++k)
          dims += (k ? ", " : "") + to_string(spec.branches[k]) + "=" + std::to_string(inputs[k]->dim());
        result.events.push_back({"pipeline '" + spec.name + "': " + to_string(spec.fusion) +
                                 " fusion needs equal dimensions (" + dims + "); appended instead"});
        break;
      }
    }
  }

  Eigen::Index out_dim = 0;
  if (result.applied == FusionOp::Append)
    for (const auto* m : inputs) out_dim += m->dim();
  else
    out_dim = lead.dim();

  EmbeddingMatrix& fused = result.fused;
  fused.encoder_id = spec.name;
  fused.modality = Modality::Rgbd;
  fused.row_ids = lead.row_ids;
  fused.rows.resize(lead.size(), out_dim);
  fused.provenance["fusion"] = to_string(result.applied);
  std::string names;
  for (const auto& b : spec.branches) names += (names.empty() ? "" : "+") + to_string(b);
  fused.provenance["branches"] = names;

  std::vector<Eigen::VectorXf> parts(inputs.size());
  for (Eigen::Index r = 0; r < lead.size(); ++r) {
    for (std::size_t k = 0; k < inputs.size(); ++k) parts[k] = inputs[k]->rows.row(order[k][r]).transpose();
    fused.rows.row(r) = fuse<float>(std::span<const Eigen::VectorXf>(parts), result.applied).transpose();
  }
  return result;
}

}  // namespace fgvc
