#include "tpt/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "tpt/error.hpp"

namespace tpt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written as native little-endian f32");

constexpr const char* kFormat = "threephase-checkpoint";

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t from_hex(const std::string& s) {
  if (s.size() != 16) throw IoError("checkpoint: bad hex word '" + s + "'");
  std::uint64_t v = 0;
  for (char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw IoError("checkpoint: bad hex word '" + s + "'");
  }
  return v;
}

nlohmann::json rng_to_json(const Rng::State& s) {
  nlohmann::json words = nlohmann::json::array();
  for (auto w : s.words) words.push_back(to_hex(w));
  std::uint64_t spare_bits = 0;
  std::memcpy(&spare_bits, &s.spare, sizeof spare_bits);
  return {{"words", words}, {"has_spare", s.has_spare}, {"spare_bits", to_hex(spare_bits)}};
}

Rng::State rng_from_json(const nlohmann::json& j) {
  Rng::State s;
  const auto& words = j.at("words");
  if (!words.is_array() || words.size() != 4) throw IoError("checkpoint: rng needs 4 words");
  for (std::size_t i = 0; i < 4; ++i) s.words[i] = from_hex(words[i].get<std::string>());
  s.has_spare = j.at("has_spare").get<bool>();
  const std::uint64_t bits = from_hex(j.at("spare_bits").get<std::string>());
  std::memcpy(&s.spare, &bits, sizeof bits);
  return s;
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const CheckpointTensor& Checkpoint::at(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw IoError("checkpoint: missing tensor '" + name + "'");
}

void Checkpoint::put(std::string name, Shape shape, std::vector<float> data) {
  if (numel(shape) != data.size()) throw ShapeError("checkpoint: data does not match shape");
  for (auto& t : tensors) {
    if (t.name == name) {
      t.shape = std::move(shape);
      t.data = std::move(data);
      return;
    }
  }
  tensors.push_back({std::move(name), std::move(shape), std::move(data)});
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("checkpoint: cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    const std::uint64_t nbytes = t.data.size() * sizeof(float);
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"},
                       {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const nlohmann::json manifest = {
      {"format", kFormat},   {"version", Checkpoint::kVersion}, {"step", ckpt.step},
      {"rng", rng_to_json(ckpt.rng)}, {"config", ckpt.config}, {"metadata", ckpt.metadata},
      {"blob", "tensors.bin"}, {"blob_bytes", offset}, {"tensors", tensors},
  };

  {
    std::ofstream blob(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
    if (!blob) throw IoError("checkpoint: cannot write " + (dir / "tensors.bin").string());
    for (const auto& t : ckpt.tensors) {
      blob.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!blob) throw IoError("checkpoint: short write to tensors.bin");
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("checkpoint: short write to manifest.json");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("checkpoint: cannot read " + (dir / "manifest.json").string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed manifest: ") + e.what());
  }

  Checkpoint ckpt;
  std::vector<char> bytes;
  try {
    if (m.at("format") != kFormat) throw IoError("checkpoint: unknown format");
    if (m.at("version").get<int>() != Checkpoint::kVersion) {
      throw IoError("checkpoint: unsupported version " + m.at("version").dump());
    }
    ckpt.step = m.at("step").get<std::uint64_t>();
    ckpt.rng = rng_from_json(m.at("rng"));
    ckpt.config = m.at("config");
    ckpt.metadata = m.at("metadata");

    std::ifstream blob(dir / m.at("blob").get<std::string>(), std::ios::binary);
    if (!blob) throw IoError("checkpoint: cannot read tensor blob in " + dir.string());
    bytes.assign(std::istreambuf_iterator<char>(blob), std::istreambuf_iterator<char>());
    if (bytes.size() != m.at("blob_bytes").get<std::uint64_t>()) {
      throw IoError("checkpoint: blob holds " + std::to_string(bytes.size()) + " bytes, manifest says " +
                    m.at("blob_bytes").dump());
    }

    for (const auto& t : m.at("tensors")) {
      if (t.at("dtype") != "f32") throw IoError("checkpoint: only f32 tensors are supported");
      CheckpointTensor ct;
      ct.name = t.at("name").get<std::string>();
      ct.shape = t.at("shape").get<Shape>();
      const auto off = t.at("offset").get<std::uint64_t>();
      const auto nbytes = t.at("nbytes").get<std::uint64_t>();
      if (nbytes != numel(ct.shape) * sizeof(float) || off + nbytes > bytes.size()) {
        throw IoError("checkpoint: tensor '" + ct.name + "' has an inconsistent extent");
      }
      ct.data.resize(numel(ct.shape));
      std::memcpy(ct.data.data(), bytes.data() + off, nbytes);
      ckpt.tensors.push_back(std::move(ct));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  return ckpt;
}

void export_model(const model::Model<float>& m, Checkpoint& ckpt) {
  ckpt.config = model::to_json(m.config());
  for (const auto& p : m.params().items()) {
    ckpt.put("param/" + p.name, p.value.shape(),
             std::vector<float>(p.value.data().begin(), p.value.data().end()));
  }
  const auto& snap = m.theta_init_snapshot();
  for (std::size_t l = 0; l < snap.size(); ++l) {
    ckpt.put("theta_init/" + std::to_string(l), {snap[l].size()}, snap[l]);
  }
}

void import_model(model::Model<float>& m, const Checkpoint& ckpt) {
  for (auto& p : m.params().items()) {
    const auto& t = ckpt.at("param/" + p.name);
    if (t.shape != p.value.shape()) {
      throw IoError("checkpoint: '" + p.name + "' has shape " + shape_str(t.shape) +
                    ", model expects " + shape_str(p.value.shape()));
    }
    std::copy(t.data.begin(), t.data.end(), p.value.mutable_data().begin());
  }
  std::vector<std::vector<float>> snap;
  for (std::size_t l = 0; l < m.theta_init_snapshot().size(); ++l) {
    snap.push_back(ckpt.at("theta_init/" + std::to_string(l)).data);
  }
  try {
    m.restore_theta_init_snapshot(std::move(snap));
  } catch (const ShapeError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace tpt
