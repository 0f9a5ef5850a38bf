#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mtln/config.hpp"
#include "mtln/error.hpp"
#include "mtln/train.hpp"

namespace mtln {

namespace {

constexpr char kMagic[4] = {'M', 'T', 'L', 'N'};
constexpr const char* kVelocityPrefix = "vel/";

void put_bytes(std::ostream& os, const unsigned char* bytes, std::size_t n) {
  os.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
}

template <class U>
void put_le(std::ostream& os, U value) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(value >> (8 * i));
  put_bytes(os, b, sizeof(U));
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_le(os, bits);
}

void get_exact(std::istream& is, char* out, std::size_t n) {
  is.read(out, static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n)) throw FormatError("checkpoint is truncated");
}

template <class U>
U get_le(std::istream& is) {
  unsigned char b[sizeof(U)];
  get_exact(is, reinterpret_cast<char*>(b), sizeof(U));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>(v | (static_cast<U>(b[i]) << (8 * i)));
  return v;
}

float get_f32(std::istream& is) {
  const auto bits = get_le<std::uint32_t>(is);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.size() > 0xFFFF) throw InvalidArgument("checkpoint tensor name too long");
  put_le(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_le(os, static_cast<std::uint8_t>(t.rank()));
  for (int d : t.dims()) put_le(os, static_cast<std::uint32_t>(d));
  for (float v : t.values()) put_f32(os, v);
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  nlohmann::json doc = train_config_to_json(ck.config);
  doc["epoch"] = ck.epoch;
  const std::string text = doc.dump();
  os.write(kMagic, 4);
  put_le(os, kCheckpointVersion);
  put_le(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_le(os, static_cast<std::uint32_t>(ck.params.size() + ck.velocity.size()));
  for (const auto& [name, t] : ck.params) put_tensor(os, name, t);
  for (const auto& [name, t] : ck.velocity) put_tensor(os, kVelocityPrefix + name, t);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, ck);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  get_exact(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto json_len = get_le<std::uint32_t>(is);
  std::string text(json_len, '\0');
  get_exact(is, text.data(), json_len);

  Checkpoint ck;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw FormatError("checkpoint config is not valid JSON");
  }
  if (!doc.is_object() || !doc.contains("epoch") || !doc["epoch"].is_number_integer()) {
    throw FormatError("checkpoint config lacks an epoch");
  }
  ck.epoch = doc["epoch"].get<int>();
  doc.erase("epoch");
  ck.config = train_config_from_json(doc);

  const auto count = get_le<std::uint32_t>(is);
  const auto shapes = parameter_shapes(ck.config.network);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    get_exact(is, name.data(), name_len);
    const auto rank = get_le<std::uint8_t>(is);
    Dims dims(rank);
    for (auto& d : dims) {
      const auto v = get_le<std::uint32_t>(is);
      if (v == 0 || v > (1u << 24)) throw FormatError("checkpoint tensor '" + name + "' has an invalid extent");
      d = static_cast<int>(v);
    }
    std::vector<float> values(element_count(dims));
    for (auto& v : values) v = get_f32(is);

    const bool is_velocity = name.rfind(kVelocityPrefix, 0) == 0;
    const std::string base = is_velocity ? name.substr(std::strlen(kVelocityPrefix)) : name;
    const auto shape = shapes.find(base);
    if (shape == shapes.end()) throw FormatError("checkpoint tensor '" + name + "' is not part of the network");
    if (shape->second != dims) {
      throw FormatError("checkpoint tensor '" + name + "' has dims " + to_string(dims) + ", network expects " +
                        to_string(shape->second));
    }
    auto& target = is_velocity ? ck.velocity : ck.params;
    if (!target.emplace(base, Tensor(dims, std::move(values), !is_velocity)).second) {
      throw FormatError("checkpoint tensor '" + name + "' appears twice");
    }
  }
  if (ck.params.size() != shapes.size()) throw FormatError("checkpoint is missing network parameters");
  if (!ck.velocity.empty() && ck.velocity.size() != shapes.size()) {
    throw FormatError("checkpoint velocity is incomplete");
  }
  if (ck.velocity.empty()) ck.velocity = zeros_like(ck.params);
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace mtln
