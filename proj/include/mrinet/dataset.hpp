#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mrinet {

inline constexpr std::size_t num_classes = 5;
// Class ids follow ascending name order.
inline constexpr std::array<std::string_view, num_classes> class_names{
    "benign", "malignant", "no_stroke", "no_tumor", "stroke"};

// Id of a class name; LabelError for names outside the taxonomy.
int class_id(std::string_view name);
std::string_view class_name(int id);

struct Record {
  std::string path; // relative to the dataset root, '/' separated
  int class_id = 0;

  bool operator==(const Record &) const = default;
  auto operator<=>(const Record &) const = default;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<Record> records; // sorted by path

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  std::array<std::size_t, num_classes> class_counts() const;
  std::filesystem::path absolute(const Record &r) const { return root / r.path; }
};

struct ScanResult {
  DatasetIndex index;
  std::vector<std::string> skipped; // relative paths of unreadable files
};

// Lists <root>/<class>/*.{png,jpg,jpeg} (case-insensitive extensions). The
// root must hold exactly the five class directories: a missing one or any
// extra directory raises TaxonomyError. Files that cannot be opened or do
// not start with a PNG or JPEG signature are skipped with a warning on
// stderr and listed in the result. Other files are ignored.
ScanResult scan_dataset(const std::filesystem::path &root);

// Per class, floor(train_frac * count) records go to train; the units still
// needed to reach round(train_frac * total) go to the classes with the
// largest fractional remainders (ties: lower class id). Records are chosen
// by a per-class shuffle keyed by (seed, class id); both outputs are sorted.
// Every class in `expected_classes` must have at least one record and no
// record may fall outside them (SplitError). train_frac outside (0, 1)
// raises ConfigError.
std::pair<DatasetIndex, DatasetIndex>
stratified_split(const DatasetIndex &index, double train_frac, std::uint64_t seed,
                 const std::vector<int> &expected_classes = {0, 1, 2, 3, 4});

// Manifest text: one "relative/path<TAB>class_id" line per record, sorted.
std::string format_manifest(const DatasetIndex &index);
// Parses a manifest; paths resolve against `root`. Malformed lines raise
// ConfigError naming the line, bad ids raise LabelError.
DatasetIndex parse_manifest(std::string_view text, const std::filesystem::path &root,
                            const std::string &origin = "manifest");
DatasetIndex read_manifest(const std::filesystem::path &file, const std::filesystem::path &root);

} // namespace mrinet
