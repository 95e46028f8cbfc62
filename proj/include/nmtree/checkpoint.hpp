#ifndef NMTREE_CHECKPOINT_HPP
#define NMTREE_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "nmtree/config.hpp"
#include "nmtree/model.hpp"

namespace nmtree {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "nmtree-checkpoint";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct Checkpoint {
  RunConfig config;
  NMTree<T> model;
  std::size_t epoch = 0;
};

// Blob lives next to the manifest as "<manifest>.bin".
inline std::string blob_path(const std::string& manifest_path) { return manifest_path + ".bin"; }

namespace detail {

template <class T>
void put_le(std::string& out, std::span<const T> values) {
  static_assert(std::is_floating_point_v<T>);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  for (T v : values) {
    U bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (std::size_t b = 0; b < sizeof bits; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

template <class T>
std::vector<T> get_le(const std::string& blob, std::size_t offset, std::size_t count) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  if ((offset + count) * sizeof(T) > blob.size())
    throw CheckpointError("checkpoint: truncated blob (need " + std::to_string((offset + count) * sizeof(T)) +
                          " bytes, have " + std::to_string(blob.size()) + ")");
  std::vector<T> out(count);
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data()) + offset * sizeof(T);
  for (std::size_t i = 0; i < count; ++i) {
    U bits = 0;
    for (std::size_t b = 0; b < sizeof bits; ++b) bits |= static_cast<U>(p[i * sizeof(T) + b]) << (8 * b);
    std::memcpy(&out[i], &bits, sizeof bits);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline nlohmann::json vocab_json(const Vocabulary& v) {
  return {{"words", v.words.items()}, {"pos", v.pos.items()}, {"deps", v.deps.items()}};
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const NMTree<T>& model, const RunConfig& config,
                     std::size_t epoch) {
  std::string blob;
  nlohmann::json params = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, e] : model.params().entries()) {
    const auto n = e.tensor.size();
    params.push_back({{"name", name},
                      {"shape", e.tensor.shape},
                      {"offset", offset},
                      {"m_offset", offset + n},
                      {"v_offset", offset + 2 * n},
                      {"step_count", e.state.step_count}});
    detail::put_le<T>(blob, e.tensor.values);
    detail::put_le<T>(blob, e.state.m);
    detail::put_le<T>(blob, e.state.v);
    offset += 3 * n;
  }
  nlohmann::json manifest{{"format", kCheckpointFormat},
                          {"version", kCheckpointVersion},
                          {"precision", sizeof(T) * 8},
                          {"epoch", epoch},
                          {"tau", model.tau()},
                          {"config", to_json(config)},
                          {"vocab", detail::vocab_json(model.vocab())},
                          {"blob", std::filesystem::path(blob_path(path)).filename().string()},
                          {"blob_values", offset},
                          {"parameters", params}};
  {
    std::ofstream os(blob_path(path), std::ios::binary);
    if (!os) throw CheckpointError("checkpoint: cannot write '" + blob_path(path) + "'");
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  std::ofstream os(path);
  if (!os) throw CheckpointError("checkpoint: cannot write '" + path + "'");
  os << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::string& path) {
  auto manifest = nlohmann::json::parse(detail::read_file(path));
  if (manifest.value("format", "") != kCheckpointFormat)
    throw CheckpointError("checkpoint: '" + path + "' is not a checkpoint manifest");
  if (manifest.value("version", -1) != kCheckpointVersion)
    throw CheckpointError("checkpoint: version " + manifest.value("version", nlohmann::json()).dump() +
                          " does not match supported version " + std::to_string(kCheckpointVersion));
  return manifest;
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  auto manifest = read_manifest(path);
  if (manifest.at("precision").get<std::size_t>() != sizeof(T) * 8)
    throw CheckpointError("checkpoint: stored precision " + manifest.at("precision").dump() +
                          " does not match requested " + std::to_string(sizeof(T) * 8));
  const std::string blob = detail::read_file(blob_path(path));
  if (blob.size() != manifest.at("blob_values").get<std::size_t>() * sizeof(T))
    throw CheckpointError("checkpoint: blob has " + std::to_string(blob.size()) + " bytes, manifest expects " +
                          std::to_string(manifest.at("blob_values").get<std::size_t>() * sizeof(T)));

  RunConfig config = config_from_json(manifest.at("config"));
  const auto& vj = manifest.at("vocab");
  Vocabulary vocab{SymbolMap(vj.at("words").get<std::vector<std::string>>()),
                   SymbolMap(vj.at("pos").get<std::vector<std::string>>()),
                   SymbolMap(vj.at("deps").get<std::vector<std::string>>())};

  // Every parameter the model defines must appear in the manifest.
  ParameterStore<T> reference;
  create_parameters(reference, vocab, config.train.dims, 0);
  std::map<std::string, const nlohmann::json*> listed;
  for (const auto& p : manifest.at("parameters")) listed[p.at("name").get<std::string>()] = &p;
  ParameterStore<T> store;
  for (const auto& [name, ref] : reference.entries()) {
    auto it = listed.find(name);
    if (it == listed.end()) throw CheckpointError("checkpoint: missing parameter '" + name + "'");
    const nlohmann::json& p = *it->second;
    Shape shape = p.at("shape").get<Shape>();
    if (shape != ref.tensor.shape)
      throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                            ", expected " + shape_str(ref.tensor.shape));
    auto& t = store.add(name, shape);
    const auto n = t.size();
    t.values = detail::get_le<T>(blob, p.at("offset").get<std::size_t>(), n);
    auto& st = store.entry(name).state;
    st.m = detail::get_le<T>(blob, p.at("m_offset").get<std::size_t>(), n);
    st.v = detail::get_le<T>(blob, p.at("v_offset").get<std::size_t>(), n);
    st.step_count = p.at("step_count").get<std::uint64_t>();
  }
  if (listed.size() != reference.size())
    throw CheckpointError("checkpoint: manifest lists unexpected parameters");

  return Checkpoint<T>{config,
                       NMTree<T>(std::move(vocab), config.train.dims, manifest.at("tau").get<double>(),
                                 std::move(store)),
                       manifest.at("epoch").get<std::size_t>()};
}

}  // namespace nmtree

#endif  // NMTREE_CHECKPOINT_HPP
