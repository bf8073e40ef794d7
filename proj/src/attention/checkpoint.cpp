#include "eatt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include "eatt/error.hpp"

namespace eatt {

namespace fs = std::filesystem;

const Tensor<float>& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

namespace {

void put_le32(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_le32(const std::string& in, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i)
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const fs::path& manifest, const Checkpoint& ckpt) {
  fs::path blob_path = manifest;
  blob_path.replace_extension(".bin");

  nlohmann::json entries = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, t] : ckpt.tensors) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float32"}, {"offset", blob.size()}});
    for (float v : t.data()) put_le32(blob, v);
  }
  nlohmann::json doc = {{"format", "eatt-checkpoint"},
                        {"version", 1},
                        {"blob", blob_path.filename().string()},
                        {"tensors", entries},
                        {"meta", ckpt.meta}};

  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  std::ofstream bf(blob_path, std::ios::binary);
  if (!bf) throw FormatError("cannot write " + blob_path.string());
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream mf(manifest);
  if (!mf) throw FormatError("cannot write " + manifest.string());
  mf << doc.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& manifest) {
  std::ifstream mf(manifest);
  if (!mf) throw FormatError("cannot open checkpoint manifest " + manifest.string());
  nlohmann::json doc;
  try {
    mf >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint manifest " + manifest.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "eatt-checkpoint")
    throw FormatError(manifest.string() + " is not an eatt checkpoint manifest");

  const fs::path blob_path = manifest.parent_path() / doc.at("blob").get<std::string>();
  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw FormatError("cannot open checkpoint blob " + blob_path.string());
  const std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  ckpt.meta = doc.value("meta", nlohmann::json::object());
  for (const auto& e : doc.at("tensors")) {
    if (e.value("dtype", "") != "float32") throw FormatError("unsupported dtype in checkpoint");
    const auto shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (offset + 4 * n > blob.size())
      throw FormatError("checkpoint blob too short for tensor " + e.at("name").get<std::string>());
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = get_le32(blob, offset + 4 * i);
    ckpt.tensors.emplace_back(e.at("name").get<std::string>(), Tensor<float>(shape, std::move(data)));
  }
  return ckpt;
}

}  // namespace eatt
