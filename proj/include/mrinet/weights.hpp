#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mrinet/checkpoint.hpp"
#include "mrinet/graph.hpp"

namespace mrinet {

// (blob slot name, graph slot name) pairs.
using NameMap = std::vector<std::pair<std::string, std::string>>;

// Maps every slot (or every backbone slot) of `graph` onto the same name.
NameMap identity_name_map(const NetworkGraph &graph);
NameMap backbone_name_map(const NetworkGraph &graph);

struct ImportReport {
  std::vector<std::string> loaded;   // graph slots overwritten
  std::vector<std::string> skipped;  // graph slots not named by the map
  std::vector<std::string> missing;  // mapped blob names absent from the blob
};

struct ImportOptions {
  // When false, any missing blob entry raises ImportError.
  bool allow_missing = false;
};

// Overwrites the mapped slots of `params` from `blob`. Every pair is checked
// first; an unknown slot or a shape mismatch raises ImportError naming the
// slot, and then nothing is modified.
ImportReport import_weights(const NetworkGraph &graph, ParameterSet<float> &params,
                            const Checkpoint &blob, const NameMap &name_map,
                            const ImportOptions &options = {});
ImportReport import_weights(const NetworkGraph &graph, ParameterSet<float> &params,
                            const std::filesystem::path &blob_path, const NameMap &name_map,
                            const ImportOptions &options = {});

} // namespace mrinet
