#pragma once

// Checkpoint file layout:
//   u64 little-endian manifest length
//   manifest: UTF-8 JSON with sorted keys
//   blob: little-endian IEEE-754 f32 values, one tensor after another in
//         manifest order
// The manifest lists every tensor as {name, kind, shape, offset} sorted by
// name; offsets count bytes from the start of the blob. Parameter tensors
// are named "param/<slot>", optimizer moments "adam.m/<slot>" and
// "adam.v/<slot>".

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mrinet/adam.hpp"
#include "mrinet/graph.hpp"

namespace mrinet {

inline constexpr int checkpoint_format_version = 1;

struct Checkpoint {
  std::string model;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t epoch = 0;
  ParameterSet<float> params;
  std::optional<AdamState<float>> adam;
};

std::string encode_checkpoint(const Checkpoint &ckpt);
// Validates the whole file; throws CheckpointError naming `origin`.
Checkpoint decode_checkpoint(std::string_view bytes, const std::string &origin = "checkpoint");

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

// Copies the checkpoint into `params` (and `adam` when given) after checking
// every graph slot, in name order; the first missing or mismatched slot is
// named in a CheckpointError. Nothing is modified unless all checks pass.
void restore_checkpoint(const Checkpoint &ckpt, const NetworkGraph &graph,
                        ParameterSet<float> &params, AdamState<float> *adam = nullptr);

} // namespace mrinet
