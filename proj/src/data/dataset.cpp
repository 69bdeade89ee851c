#include "mrinet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mrinet/atomic_file.hpp"
#include "mrinet/errors.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

namespace fs = std::filesystem;

int class_id(std::string_view name) {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name)
      return static_cast<int>(i);
  throw LabelError("unknown class '" + std::string(name) + "'");
}

std::string_view class_name(int id) {
  if (id < 0 || id >= static_cast<int>(num_classes))
    throw LabelError("class id " + std::to_string(id) + " is outside 0..4");
  return class_names[static_cast<std::size_t>(id)];
}

std::array<std::size_t, num_classes> DatasetIndex::class_counts() const {
  std::array<std::size_t, num_classes> counts{};
  for (const auto &r : records)
    ++counts.at(static_cast<std::size_t>(r.class_id));
  return counts;
}

namespace {

bool image_extension(const fs::path &p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

bool has_image_signature(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    return false;
  unsigned char head[8] = {};
  in.read(reinterpret_cast<char *>(head), sizeof head);
  const auto n = in.gcount();
  static const unsigned char png[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (n == 8 && std::equal(head, head + 8, png))
    return true;
  return n >= 3 && head[0] == 0xff && head[1] == 0xd8 && head[2] == 0xff;
}

} // namespace

ScanResult scan_dataset(const fs::path &root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec))
    throw TaxonomyError("dataset root " + root.string() + " is not a directory");

  std::set<std::string> dirs;
  for (const auto &e : fs::directory_iterator(root))
    if (e.is_directory())
      dirs.insert(e.path().filename().string());
  for (auto name : class_names)
    if (!dirs.count(std::string(name)))
      throw TaxonomyError("class directory '" + std::string(name) + "' is missing under " +
                          root.string());
  for (const auto &d : dirs)
    if (std::find(class_names.begin(), class_names.end(), d) == class_names.end())
      throw TaxonomyError("unexpected directory '" + d + "' under " + root.string() +
                          " (allowed: benign, malignant, no_stroke, no_tumor, stroke)");

  ScanResult result;
  result.index.root = root;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const fs::path dir = root / std::string(class_names[c]);
    for (const auto &e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file() || !image_extension(e.path()))
        continue;
      const std::string rel = std::string(class_names[c]) + "/" + e.path().filename().string();
      if (!has_image_signature(e.path())) {
        std::cerr << "warning: skipping unreadable image " << rel << "\n";
        result.skipped.push_back(rel);
        continue;
      }
      result.index.records.push_back({rel, static_cast<int>(c)});
    }
  }
  std::sort(result.index.records.begin(), result.index.records.end());
  std::sort(result.skipped.begin(), result.skipped.end());
  return result;
}

std::pair<DatasetIndex, DatasetIndex> stratified_split(const DatasetIndex &index,
                                                       double train_frac, std::uint64_t seed,
                                                       const std::vector<int> &expected) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("train fraction must lie strictly between 0 and 1, got " +
                      std::to_string(train_frac));
  if (index.empty())
    throw SplitError("cannot split an empty index");

  std::vector<std::vector<Record>> by_class(num_classes);
  for (const auto &r : index.records) {
    if (std::find(expected.begin(), expected.end(), r.class_id) == expected.end())
      throw SplitError("record " + r.path + " has unexpected class id " +
                       std::to_string(r.class_id));
    by_class.at(static_cast<std::size_t>(r.class_id)).push_back(r);
  }
  for (int c : expected)
    if (by_class.at(static_cast<std::size_t>(c)).empty())
      throw SplitError("class '" + std::string(class_name(c)) + "' has no images");

  const std::size_t total = index.size();
  const auto target = static_cast<std::size_t>(std::llround(train_frac * double(total)));
  std::vector<std::size_t> take(num_classes, 0);
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (int c : expected) {
    const double exact = train_frac * double(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += take[c];
    remainders.emplace_back(exact - double(take[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto &a, const auto &b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i) {
    const int c = remainders[i].second;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  DatasetIndex train{index.root, {}}, val{index.root, {}};
  for (int c : expected) {
    auto &records = by_class[c];
    Rng rng = Rng::keyed({seed, static_cast<std::uint64_t>(c)});
    shuffle(records.begin(), records.end(), rng);
    for (std::size_t i = 0; i < records.size(); ++i)
      (i < take[c] ? train : val).records.push_back(records[i]);
  }
  std::sort(train.records.begin(), train.records.end());
  std::sort(val.records.begin(), val.records.end());
  return {std::move(train), std::move(val)};
}

std::string format_manifest(const DatasetIndex &index) {
  std::vector<Record> sorted = index.records;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto &r : sorted)
    out += r.path + "\t" + std::to_string(r.class_id) + "\n";
  return out;
}

DatasetIndex parse_manifest(std::string_view text, const fs::path &root,
                            const std::string &origin) {
  DatasetIndex index{root, {}};
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto tab = line.find('\t');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos)
      throw ConfigError(where + ": expected 'path<TAB>class_id'");
    const std::string path = line.substr(0, tab), id = line.substr(tab + 1);
    int cid = -1;
    try {
      std::size_t used = 0;
      cid = std::stoi(id, &used);
      if (used != id.size())
        throw std::invalid_argument(id);
    } catch (const std::exception &) {
      throw ConfigError(where + ": class id '" + id + "' is not an integer");
    }
    if (cid < 0 || cid >= static_cast<int>(num_classes))
      throw LabelError(where + ": class id " + std::to_string(cid) + " is outside 0..4");
    if (!seen.insert(path).second)
      throw ConfigError(where + ": duplicate path " + path);
    index.records.push_back({path, cid});
  }
  std::sort(index.records.begin(), index.records.end());
  return index;
}

DatasetIndex read_manifest(const fs::path &file, const fs::path &root) {
  return parse_manifest(read_file(file), root, file.string());
}

} // namespace mrinet
