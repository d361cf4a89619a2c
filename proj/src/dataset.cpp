#include "scg/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include "scg/warp.hpp"

namespace scg {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty()) throw IoError(path + ": file is empty");
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) |
         (std::uint32_t(b[at + 2]) << 8) | std::uint32_t(b[at + 3]);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

} // namespace

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  return slice(0, n);
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  begin = std::min(begin, end);
  Dataset out;
  out.channels = channels;
  out.side = side;
  out.images.assign(images.begin() + long(begin), images.begin() + long(end));
  if (labels.size() == images.size())
    out.labels.assign(labels.begin() + long(begin), labels.begin() + long(end));
  return out;
}

void AugConfig::validate() const {
  if (!(max_translation_fraction >= 0.0 && max_translation_fraction <= 0.5))
    throw PreconditionError("AugConfig: max_translation_fraction must lie in [0, 0.5]");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  if (img.size() < 16) throw IoError(images_path + ": truncated IDX header");
  const std::uint32_t magic = be32(img, 0);
  if (magic != 0x00000803)
    throw FormatError(images_path + ": bad IDX image magic, expected 0x00000803, got " +
                      hex(magic));
  const std::size_t count = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  if (rows != cols) throw FormatError(images_path + ": non-square images are not supported");
  if (img.size() < 16 + count * rows * cols)
    throw IoError(images_path + ": truncated, header promises " + std::to_string(count) +
                  " images");

  Dataset ds;
  ds.channels = 1;
  ds.side = Index(rows);
  ds.images.reserve(count);
  const unsigned char* px = img.data() + 16;
  for (std::size_t n = 0; n < count; ++n) {
    ImageTensor<float> im(1, Index(rows), Index(cols));
    for (Index i = 0; i < im.data().size(); ++i) im.data()[i] = float(*px++) / 255.0f;
    ds.images.push_back(std::move(im));
  }

  if (!labels_path.empty()) {
    const auto lab = read_file(labels_path);
    if (lab.size() < 8) throw IoError(labels_path + ": truncated IDX header");
    const std::uint32_t lmagic = be32(lab, 0);
    if (lmagic != 0x00000801)
      throw FormatError(labels_path + ": bad IDX label magic, expected 0x00000801, got " +
                        hex(lmagic));
    const std::size_t lcount = be32(lab, 4);
    if (lcount != count)
      throw FormatError(labels_path + ": " + std::to_string(lcount) + " labels for " +
                        std::to_string(count) + " images");
    if (lab.size() < 8 + lcount) throw IoError(labels_path + ": truncated label data");
    ds.labels.assign(lab.begin() + 8, lab.begin() + 8 + long(lcount));
  }
  return ds;
}

Dataset load_cifar10(const std::vector<std::string>& paths) {
  constexpr std::size_t record = 3073, side = 32;
  Dataset ds;
  ds.channels = 3;
  ds.side = side;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.size() % record != 0)
      throw FormatError(path + ": length " + std::to_string(bytes.size()) +
                        " is not a multiple of 3073-byte CIFAR-10 records");
    for (std::size_t off = 0; off < bytes.size(); off += record) {
      ds.labels.push_back(int(bytes[off]));
      ImageTensor<float> im(3, side, side);
      for (Index i = 0; i < im.data().size(); ++i)
        im.data()[i] = float(bytes[off + 1 + std::size_t(i)]) / 255.0f;
      ds.images.push_back(std::move(im));
    }
  }
  return ds;
}

TransformParams sample_delta(Index side, const AugConfig& aug, std::mt19937_64& rng) {
  const double range = aug.max_translation_fraction * double(side);
  std::uniform_real_distribution<double> shift(-range, range);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  TransformParams d;
  d.t_x = range > 0 ? shift(rng) : 0.0;
  d.t_y = range > 0 ? shift(rng) : 0.0;
  d.r_theta = aug.rotation_full_circle ? wrap_angle(angle(rng)) : 0.0;
  return d;
}

TrainingPair sample_pair(const Dataset& data, const AugConfig& aug, std::mt19937_64& rng) {
  if (data.empty()) throw PreconditionError("sample_pair: dataset is empty");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  TrainingPair p;
  p.image = data.images[pick(rng)];
  p.delta = sample_delta(data.side, aug, rng);
  p.image_prime = warp(p.image, p.delta);
  return p;
}

} // namespace scg
