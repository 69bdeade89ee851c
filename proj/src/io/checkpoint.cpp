#include "mrinet/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mrinet/atomic_file.hpp"
#include "mrinet/errors.hpp"

namespace mrinet {

using nlohmann::json;

namespace {

void put_u64(std::string &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= std::uint64_t(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

void put_f32(std::string &out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

float get_f32(const char *p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i)
    u |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(u);
}

struct Entry {
  std::string kind;
  const Tensor<float> *tensor;
};

std::string kind_name(SlotKind k) { return k == SlotKind::trainable ? "trainable" : "state"; }

} // namespace

std::string encode_checkpoint(const Checkpoint &ckpt) {
  std::map<std::string, Entry> entries;
  for (const auto &[name, e] : ckpt.params.entries())
    entries["param/" + name] = {kind_name(e.kind), &e.value};
  if (ckpt.adam) {
    for (const auto &[name, t] : ckpt.adam->m)
      entries["adam.m/" + name] = {"adam_m", &t};
    for (const auto &[name, t] : ckpt.adam->v)
      entries["adam.v/" + name] = {"adam_v", &t};
  }

  json tensors = json::array();
  std::string blob;
  for (const auto &[name, e] : entries) {
    tensors.push_back({{"name", name},
                       {"kind", e.kind},
                       {"shape", e.tensor->shape()},
                       {"offset", blob.size()}});
    blob.reserve(blob.size() + 4 * e.tensor->size());
    for (float f : e.tensor->data())
      put_f32(blob, f);
  }
  json manifest = {{"format_version", checkpoint_format_version},
                   {"model", ckpt.model},
                   {"config", ckpt.config},
                   {"epoch", ckpt.epoch},
                   {"blob_bytes", blob.size()},
                   {"tensors", tensors}};
  if (ckpt.adam)
    manifest["adam_step"] = ckpt.adam->step;
  const std::string text = manifest.dump();

  std::string out;
  out.reserve(8 + text.size() + blob.size());
  put_u64(out, text.size());
  out += text;
  out += blob;
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string &origin) {
  auto fail = [&](const std::string &m) { return CheckpointError(origin + ": " + m); };
  if (bytes.size() < 8)
    throw fail("file too short for a manifest header");
  const std::uint64_t len = get_u64(bytes);
  if (len > bytes.size() - 8)
    throw fail("manifest length exceeds file size");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(8, len));
  } catch (const json::exception &e) {
    throw fail(std::string("manifest is not valid JSON: ") + e.what());
  }
  const std::string_view blob = bytes.substr(8 + len);

  Checkpoint ckpt;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != checkpoint_format_version)
      throw fail("format version " + std::to_string(version) + " is not supported (expected " +
                 std::to_string(checkpoint_format_version) + ")");
    ckpt.model = manifest.at("model").get<std::string>();
    ckpt.config = manifest.at("config");
    ckpt.epoch = manifest.at("epoch").get<std::uint64_t>();
    if (manifest.at("blob_bytes").get<std::uint64_t>() != blob.size())
      throw fail("weight blob has " + std::to_string(blob.size()) + " bytes, manifest says " +
                 manifest.at("blob_bytes").dump());
    if (manifest.contains("adam_step")) {
      ckpt.adam.emplace();
      ckpt.adam->step = manifest.at("adam_step").get<std::uint64_t>();
    }

    std::size_t expected_offset = 0;
    std::string previous;
    for (const auto &t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto kind = t.at("kind").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (!previous.empty() && name <= previous)
        throw fail("tensor list is not sorted by name at '" + name + "'");
      previous = name;
      if (offset != expected_offset)
        throw fail("tensor '" + name + "' has offset " + std::to_string(offset) + ", expected " +
                   std::to_string(expected_offset));
      if (shape.empty())
        throw fail("tensor '" + name + "' has an empty shape");
      for (auto d : shape)
        if (d == 0)
          throw fail("tensor '" + name + "' has a zero extent");
      const std::size_t count = element_count(shape);
      if (count > (blob.size() - offset) / 4)
        throw fail("tensor '" + name + "' runs past the end of the blob");
      std::vector<float> data(count);
      for (std::size_t i = 0; i < count; ++i)
        data[i] = get_f32(blob.data() + offset + 4 * i);
      expected_offset = offset + 4 * count;
      Tensor<float> value(shape, std::move(data));

      auto slash = name.find('/');
      if (slash == std::string::npos)
        throw fail("tensor name '" + name + "' has no namespace");
      const std::string ns = name.substr(0, slash), slot = name.substr(slash + 1);
      if (ns == "param" && (kind == "trainable" || kind == "state")) {
        ckpt.params.insert(slot, std::move(value),
                           kind == "trainable" ? SlotKind::trainable : SlotKind::state);
      } else if (ns == "adam.m" && kind == "adam_m" && ckpt.adam) {
        ckpt.adam->m.emplace(slot, std::move(value));
      } else if (ns == "adam.v" && kind == "adam_v" && ckpt.adam) {
        ckpt.adam->v.emplace(slot, std::move(value));
      } else {
        throw fail("unexpected tensor '" + name + "' of kind '" + kind + "'");
      }
    }
    if (expected_offset != blob.size())
      throw fail("blob has trailing bytes");
  } catch (const json::exception &e) {
    throw fail(std::string("malformed manifest: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError &e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(bytes, path.string());
}

void restore_checkpoint(const Checkpoint &ckpt, const NetworkGraph &graph,
                        ParameterSet<float> &params, AdamState<float> *adam) {
  std::map<std::string, const ParameterSlot *> slots;
  for (const auto &s : graph.slots())
    slots[s.name] = &s;
  for (const auto &[name, s] : slots) {
    if (!ckpt.params.contains(name))
      throw CheckpointError("checkpoint for '" + ckpt.model + "' lacks slot '" + name +
                            "' of " + graph.model());
    const auto &shape = ckpt.params.at(name).shape();
    if (shape != s->shape)
      throw CheckpointError("shape mismatch at slot '" + name + "': checkpoint has " +
                            to_string(shape) + ", " + graph.model() + " expects " +
                            to_string(s->shape));
  }
  for (const auto &[name, e] : ckpt.params.entries())
    if (!slots.count(name))
      throw CheckpointError("checkpoint slot '" + name + "' does not exist in " +
                            graph.model());
  if (ckpt.model != graph.model())
    throw CheckpointError("checkpoint holds model '" + ckpt.model + "', not '" + graph.model() +
                          "'");
  if (adam && ckpt.adam) {
    for (const auto *moments : {&ckpt.adam->m, &ckpt.adam->v})
      for (const auto &[name, t] : *moments) {
        auto it = slots.find(name);
        if (it == slots.end() || it->second->shape != t.shape())
          throw CheckpointError("optimizer state for '" + name + "' does not fit " +
                                graph.model());
      }
  }

  ParameterSet<float> next;
  for (const auto &[name, s] : slots)
    next.insert(name, ckpt.params.at(name), s->kind);
  params = std::move(next);
  if (adam)
    *adam = ckpt.adam ? *ckpt.adam : AdamState<float>{};
}

} // namespace mrinet
