#include "umafd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "umafd/errors.hpp"
#include "umafd/png_io.hpp"

namespace umafd::data {
namespace fs = std::filesystem;

std::string to_string(Modality m) { return m == Modality::Rgb ? "rgb" : "depth"; }
std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<ClipRecord> load_manifest(const fs::path& root) {
  const fs::path manifest = root / "manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw FileError("missing manifest: " + manifest.string());

  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
    throw SchemaError(manifest.string() + ": header must be '" + std::string(kManifestHeader) + "'");
  }
  std::vector<ClipRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    if (fields.size() != 5) throw SchemaError(where + ": expected 5 fields, got " + std::to_string(fields.size()));

    ClipRecord r;
    r.clip_id = fields[0];
    if (r.clip_id.empty()) throw SchemaError(where + ": empty clip_id");
    if (fields[1] == "rgb") {
      r.modality = Modality::Rgb;
    } else if (fields[1] == "depth") {
      r.modality = Modality::Depth;
    } else {
      throw SchemaError(where + ": unknown modality '" + fields[1] + "'");
    }
    if (fields[2] == "train") {
      r.split = Split::Train;
    } else if (fields[2] == "test") {
      r.split = Split::Test;
    } else {
      throw SchemaError(where + ": unknown split '" + fields[2] + "'");
    }
    if (fields[3] == "0" || fields[3] == "1") {
      r.label = fields[3] == "1" ? 1 : 0;
    } else if (!fields[3].empty()) {
      throw SchemaError(where + ": label must be 0, 1 or empty, got '" + fields[3] + "'");
    }
    const bool label_required = r.split == Split::Test || r.modality == Modality::Rgb;
    if (label_required && !r.label) {
      throw SchemaError(where + ": " + to_string(r.modality) + "/" + to_string(r.split) + " clip '" + r.clip_id +
                        "' requires a label");
    }
    fs::path dir(fields[4]);
    r.frame_dir = dir.is_absolute() ? dir : root / dir;
    if (!fs::is_directory(r.frame_dir)) throw FileError(where + ": frame_dir does not exist: " + r.frame_dir.string());
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const fs::path& root, const std::vector<ClipRecord>& records) {
  std::ofstream out(root / "manifest.csv", std::ios::binary);
  if (!out) throw FileError("cannot write manifest under " + root.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    fs::path dir = r.frame_dir;
    const auto rel = dir.lexically_relative(root);
    if (!rel.empty() && *rel.begin() != "..") dir = rel;
    out << r.clip_id << ',' << to_string(r.modality) << ',' << to_string(r.split) << ','
        << (r.label ? std::to_string(*r.label) : std::string()) << ',' << dir.generic_string() << '\n';
  }
  if (!out) throw FileError("failed writing manifest under " + root.string());
}

std::map<std::string, std::size_t> count_records(const std::vector<ClipRecord>& records) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[to_string(r.split) + "/" + to_string(r.modality)];
  return counts;
}

std::vector<ClipRecord> select(const std::vector<ClipRecord>& records, Split split, Modality modality) {
  std::vector<ClipRecord> out;
  for (const auto& r : records) {
    if (r.split == split && r.modality == modality) out.push_back(r);
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t available, std::size_t frames) {
  if (available == 0) throw DataError("cannot sample frames from an empty clip");
  std::vector<std::size_t> idx(frames);
  if (available < frames) {
    for (std::size_t i = 0; i < frames; ++i) idx[i] = std::min(i, available - 1);
    return idx;
  }
  if (frames == 1) return {0};
  for (std::size_t i = 0; i < frames; ++i) idx[i] = i * (available - 1) / (frames - 1);
  return idx;
}

std::vector<double> resize_bilinear(const std::vector<double>& src, std::size_t src_h, std::size_t src_w,
                                    std::size_t channels, std::size_t dst_h, std::size_t dst_w) {
  if (src_h == dst_h && src_w == dst_w) return src;
  std::vector<double> dst(dst_h * dst_w * channels);
  const double sy = static_cast<double>(src_h) / static_cast<double>(dst_h);
  const double sx = static_cast<double>(src_w) / static_cast<double>(dst_w);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        auto at = [&](std::size_t yy, std::size_t xx) { return src[(yy * src_w + xx) * channels + c]; };
        const double top = at(y0, x0) + wx * (at(y0, x1) - at(y0, x0));
        const double bot = at(y1, x0) + wx * (at(y1, x1) - at(y1, x0));
        dst[(y * dst_w + x) * channels + c] = top + wy * (bot - top);
      }
    }
  }
  return dst;
}

fs::path frame_path(const fs::path& frame_dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%05zu.png", index);
  return frame_dir / name;
}

namespace {

std::size_t count_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("frame directory not found: " + dir.string());
  std::size_t n = 0;
  while (fs::exists(frame_path(dir, n))) ++n;
  return n;
}

}  // namespace

ClipTensor decode_clip(const ClipRecord& record, const ClipDims& dims) {
  const std::size_t available = count_frames(record.frame_dir);
  if (available == 0) throw DataError("no frames in " + record.frame_dir.string());
  const auto indices = sample_indices(available, dims.frames);
  const std::size_t H = dims.height, W = dims.width, T = dims.frames;

  ClipTensor clip;
  clip.modality = record.modality;
  clip.label = record.label;
  clip.data = Tensor(Shape{3, T, H, W});
  for (std::size_t t = 0; t < T; ++t) {
    const png::Image img = png::read(frame_path(record.frame_dir, indices[t]));
    std::vector<double> plane(img.samples.size());
    const double scale = img.max_value();
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = static_cast<double>(img.samples[i]) / scale;
    const auto resized = resize_bilinear(plane, img.height, img.width, img.channels, H, W);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t src_c = img.channels == 1 ? 0 : c;
      double* dst = clip.data.ptr() + (c * T + t) * H * W;
      for (std::size_t p = 0; p < H * W; ++p) dst[p] = std::clamp(resized[p * img.channels + src_c], 0.0, 1.0);
    }
  }
  return clip;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<std::pair<std::size_t, std::size_t>> make_pairs(std::size_t rgb_count, std::size_t depth_count,
                                                             std::uint64_t seed) {
  if (rgb_count == 0) throw DataError("make_pairs: no RGB records");
  if (depth_count == 0) throw DataError("make_pairs: no depth records");
  std::seed_seq rgb_seq{seed, std::uint64_t{0x52}};
  std::seed_seq depth_seq{seed, std::uint64_t{0x44}};
  std::uint64_t rgb_seed = 0, depth_seed = 0;
  {
    std::uint32_t words[2];
    rgb_seq.generate(words, words + 2);
    rgb_seed = (std::uint64_t{words[0]} << 32) | words[1];
    depth_seq.generate(words, words + 2);
    depth_seed = (std::uint64_t{words[0]} << 32) | words[1];
  }
  const auto rgb_perm = seeded_permutation(rgb_count, rgb_seed);
  const auto depth_perm = seeded_permutation(depth_count, depth_seed);
  const std::size_t m = std::min(rgb_count, depth_count);
  std::vector<std::pair<std::size_t, std::size_t>> pairs(m);
  for (std::size_t i = 0; i < m; ++i) pairs[i] = {rgb_perm[i], depth_perm[i]};
  return pairs;
}

std::vector<PairedBatch> make_pairs(const std::vector<ClipRecord>& rgb, const std::vector<ClipRecord>& depth,
                                    std::uint64_t seed, const ClipDims& dims) {
  for (const auto& r : rgb) {
    if (!r.label) throw DataError("make_pairs: RGB record '" + r.clip_id + "' has no label");
  }
  const auto pairs = make_pairs(rgb.size(), depth.size(), seed);
  std::vector<PairedBatch> batches;
  batches.reserve(pairs.size());
  for (const auto& [ri, di] : pairs) {
    PairedBatch b;
    b.rgb = decode_clip(rgb[ri], dims);
    b.depth = decode_clip(depth[di], dims);
    b.depth.label.reset();
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {
std::string cache_key(const ClipRecord& r) { return r.frame_dir.string(); }
bool is_depth_train(const ClipRecord& r) { return r.modality == Modality::Depth && r.split == Split::Train; }
}  // namespace

const Tensor& ClipSource::tensor(const ClipRecord& record) {
  if (is_depth_train(record)) ++depth_train_tensor_reads_;
  if (!cache_enabled_) {
    scratch_ = decode_clip(record, dims_).data;
    return scratch_;
  }
  auto it = cache_.find(cache_key(record));
  if (it == cache_.end()) it = cache_.emplace(cache_key(record), decode_clip(record, dims_).data).first;
  return it->second;
}

int ClipSource::label(const ClipRecord& record) {
  if (is_depth_train(record)) ++depth_train_label_reads_;
  if (!record.label) throw DataError("clip '" + record.clip_id + "' has no label");
  return *record.label;
}

void ClipSource::prefetch(const std::vector<ClipRecord>& records) {
  if (!cache_enabled_) return;
  std::vector<const ClipRecord*> todo;
  for (const auto& r : records) {
    if (!cache_.contains(cache_key(r))) todo.push_back(&r);
  }
  std::vector<Tensor> decoded(todo.size());
  std::string failure;
  const long n = static_cast<long>(todo.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    try {
      decoded[static_cast<std::size_t>(i)] = decode_clip(*todo[static_cast<std::size_t>(i)], dims_).data;
    } catch (const std::exception& e) {
#pragma omp critical
      if (failure.empty()) failure = e.what();
    }
  }
  if (!failure.empty()) throw DataError(failure);
  for (std::size_t i = 0; i < todo.size(); ++i) cache_.emplace(cache_key(*todo[i]), std::move(decoded[i]));
}

}  // namespace umafd::data
