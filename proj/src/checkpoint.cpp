#include "texsyn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "texsyn/image.hpp"

namespace texsyn::checkpoint {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ContractError("corrupt checkpoint: truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

const Entry* Checkpoint::find(const std::string& name) const {
  for (const Entry& e : tensors)
    if (e.name == name) return &e;
  return nullptr;
}

void write(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["meta"] = nlohmann::json::parse(ckpt.meta_json);
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const Entry& e : ckpt.tensors) {
    if (shape_size(e.shape) != e.values.size()) {
      throw DimensionError("checkpoint: tensor '" + e.name + "' shape " +
                           shape_str(e.shape) + " does not match its values");
    }
    header["tensors"].push_back(
        {{"name", e.name}, {"shape", e.shape}, {"offset", offset}, {"count", e.values.size()}});
    offset += e.values.size();
  }
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const Entry& e : ckpt.tensors)
    out.append(reinterpret_cast<const char*>(e.values.data()), e.values.size() * sizeof(double));
  write_file_atomic(path, out);
}

Checkpoint read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ContractError("corrupt checkpoint: bad magic in '" + path.string() + "'");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(data, pos);
  if (version != kVersion) {
    throw ContractError("corrupt checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(data, pos);
  if (pos + header_len > data.size()) throw ContractError("corrupt checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("corrupt checkpoint: header is not JSON: ") + e.what());
  }
  pos += header_len;
  const std::size_t payload_doubles = (data.size() - pos) / sizeof(double);

  Checkpoint ckpt;
  try {
    ckpt.meta_json = header.at("meta").dump();
    for (const auto& t : header.at("tensors")) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (count != shape_size(e.shape) || offset + count > payload_doubles) {
        throw ContractError("corrupt checkpoint: tensor '" + e.name + "' out of bounds");
      }
      e.values.resize(count);
      std::memcpy(e.values.data(), data.data() + pos + offset * sizeof(double),
                  count * sizeof(double));
      ckpt.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("corrupt checkpoint: malformed header: ") + e.what());
  }
  return ckpt;
}

}  // namespace texsyn::checkpoint
