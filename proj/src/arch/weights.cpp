#include "mrinet/weights.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "mrinet/errors.hpp"
#include "mrinet/executor.hpp"

namespace mrinet {

NameMap identity_name_map(const NetworkGraph &graph) {
  NameMap m;
  for (const auto &s : graph.slots())
    m.emplace_back(s.name, s.name);
  return m;
}

NameMap backbone_name_map(const NetworkGraph &graph) {
  NameMap m;
  for (const auto &s : graph.slots())
    if (is_backbone_layer(graph.node(s.layer)))
      m.emplace_back(s.name, s.name);
  return m;
}

ImportReport import_weights(const NetworkGraph &graph, ParameterSet<float> &params,
                            const Checkpoint &blob, const NameMap &name_map,
                            const ImportOptions &options) {
  std::map<std::string, const ParameterSlot *> slots;
  for (const auto &s : graph.slots())
    slots[s.name] = &s;

  ImportReport report;
  std::vector<std::pair<std::string, const Tensor<float> *>> writes;
  std::set<std::string> targets;
  for (const auto &[from, to] : name_map) {
    auto it = slots.find(to);
    if (it == slots.end())
      throw ImportError("slot '" + to + "' does not exist in " + graph.model());
    if (!targets.insert(to).second)
      throw ImportError("slot '" + to + "' is mapped more than once");
    if (!blob.params.contains(from)) {
      report.missing.push_back(from);
      continue;
    }
    const Tensor<float> &src = blob.params.at(from);
    if (src.shape() != it->second->shape)
      throw ImportError("shape mismatch for slot '" + to + "': blob entry '" + from + "' is " +
                        to_string(src.shape()) + ", slot expects " +
                        to_string(it->second->shape));
    writes.emplace_back(to, &src);
  }
  if (!report.missing.empty() && !options.allow_missing) {
    std::string names;
    for (const auto &n : report.missing)
      names += (names.empty() ? "" : ", ") + n;
    throw ImportError("blob lacks mapped entries: " + names);
  }
  check_parameters(graph, params);

  for (const auto &[to, src] : writes) {
    params.at(to) = *src;
    report.loaded.push_back(to);
  }
  for (const auto &[name, s] : slots)
    if (!targets.count(name))
      report.skipped.push_back(name);
  std::sort(report.loaded.begin(), report.loaded.end());
  return report;
}

ImportReport import_weights(const NetworkGraph &graph, ParameterSet<float> &params,
                            const std::filesystem::path &blob_path, const NameMap &name_map,
                            const ImportOptions &options) {
  Checkpoint blob;
  try {
    blob = load_checkpoint(blob_path);
  } catch (const CheckpointError &e) {
    throw ImportError(e.what());
  }
  return import_weights(graph, params, blob, name_map, options);
}

} // namespace mrinet
