#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "s2r/error.hpp"
#include "s2r/training.hpp"

namespace s2r::train {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void ModelSet::require_pretrained(std::initializer_list<std::string_view> names) const {
  std::vector<std::string> missing;
  for (auto n : names) {
    const std::string name(n);
    bool present = false;
    if (name == "ske") present = ske.has_value();
    else if (name == "res") present = res.has_value();
    else if (name == "critic") present = critic.has_value();
    else if (name == "inv") present = inverse.has_value();
    if (!present || !trained.count(name)) missing.push_back(name);
  }
  if (missing.empty()) return;
  std::string list;
  for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
  throw PreconditionError("missing pretrained components: " + list);
}

std::vector<ad::Parameter*> ModelSet::parameters() {
  std::vector<ad::Parameter*> out;
  auto take = [&](ad::ParameterSet& set) {
    auto all = set.all();
    out.insert(out.end(), all.begin(), all.end());
  };
  if (ske) take(ske->params());
  if (res) take(res->params());
  if (critic) take(critic->params());
  if (inverse) take(inverse->params());
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->name < b->name; });
  return out;
}

std::vector<const ad::Parameter*> ModelSet::parameters() const {
  auto ps = const_cast<ModelSet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

namespace {

constexpr char kMagic[4] = {'S', 'K', 'R', '1'};

json ske_config(const skel::SkeletonConfig& c) {
  return {{"vocab", c.vocab}, {"embedding", c.embedding}, {"hidden", c.hidden},
          {"attention", c.attention}, {"layers", c.layers}, {"dropout", c.dropout}};
}

skel::SkeletonConfig ske_config(const json& j) {
  skel::SkeletonConfig c;
  c.vocab = j.at("vocab");
  c.embedding = j.at("embedding");
  c.hidden = j.at("hidden");
  c.attention = j.at("attention");
  c.layers = j.at("layers");
  c.dropout = j.at("dropout");
  return c;
}

json res_config(const resp::ResponseConfig& c) {
  return {{"vocab", c.vocab},     {"embedding", c.embedding},           {"hidden", c.hidden},
          {"layers", c.layers},   {"decoder_hidden", c.decoder_hidden}, {"dropout", c.dropout},
          {"external_skeleton_dim", c.external_skeleton_dim}};
}

resp::ResponseConfig res_config(const json& j) {
  resp::ResponseConfig c;
  c.vocab = j.at("vocab");
  c.embedding = j.at("embedding");
  c.hidden = j.at("hidden");
  c.layers = j.at("layers");
  c.decoder_hidden = j.at("decoder_hidden");
  c.dropout = j.at("dropout");
  c.external_skeleton_dim = j.at("external_skeleton_dim");
  return c;
}

json critic_config(const CriticConfig& c) {
  return {{"vocab", c.vocab}, {"embedding", c.embedding}, {"hidden", c.hidden}};
}

CriticConfig critic_config(const json& j) {
  CriticConfig c;
  c.vocab = j.at("vocab");
  c.embedding = j.at("embedding");
  c.hidden = j.at("hidden");
  return c;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw CheckpointError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const ModelSet& models, const std::filesystem::path& path) {
  json meta;
  meta["format"] = "s2r-checkpoint";
  std::vector<std::string> tokens(models.vocab.tokens().begin() + text::Vocab::kNumReserved,
                                  models.vocab.tokens().end());
  meta["vocab"] = tokens;
  meta["vocab_hash"] = hex64(models.vocab.fingerprint());
  meta["joint"] = models.joint;
  meta["trained"] = models.trained;
  json configs = json::object();
  if (models.ske) configs["ske"] = ske_config(models.ske->config());
  if (models.res) configs["res"] = res_config(models.res->config());
  if (models.critic) configs["critic"] = critic_config(models.critic->config());
  if (models.inverse) configs["inv"] = res_config(models.inverse->config());
  meta["configs"] = configs;
  const auto params = models.parameters();
  json manifest = json::array();
  for (const auto* p : params) manifest.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  meta["parameters"] = manifest;
  const std::string text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> buf;
  for (const auto* p : params) {
    buf.assign(p->value.values().begin(), p->value.values().end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

ModelSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = read_u32(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const auto len = read_u32(in, "metadata length");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw CheckpointError("checkpoint truncated in metadata");

  json meta;
  try {
    meta = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }

  ModelSet models;
  try {
    models.vocab = text::Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
    if (hex64(models.vocab.fingerprint()) != meta.at("vocab_hash").get<std::string>())
      throw CheckpointError("checkpoint vocabulary does not match its recorded hash");
    models.joint = meta.at("joint");
    models.trained = meta.at("trained").get<std::set<std::string>>();
    const auto& configs = meta.at("configs");
    if (configs.contains("ske")) models.ske.emplace(ske_config(configs["ske"]), 0);
    if (configs.contains("res")) models.res.emplace(res_config(configs["res"]), 0);
    if (configs.contains("critic")) models.critic.emplace(critic_config(configs["critic"]), 0);
    if (configs.contains("inv")) models.inverse.emplace(res_config(configs["inv"]), 0, "inv");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  }

  if (!meta.contains("parameters") || !meta["parameters"].is_array())
    throw CheckpointError("checkpoint metadata has no parameter manifest");
  auto params = models.parameters();
  std::map<std::string, ad::Parameter*> by_name;
  for (auto* p : params) by_name[p->name] = p;

  std::vector<std::pair<ad::Parameter*, std::size_t>> order;
  std::set<std::string> seen;
  std::string unexpected;
  for (const auto& entry : meta.at("parameters")) {
    const std::string name = entry.at("name");
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      unexpected += (unexpected.empty() ? "" : ", ") + name;
      order.emplace_back(nullptr, n);
      continue;
    }
    if (it->second->value.shape() != shape)
      throw CheckpointError("parameter " + name + " has shape " + ad::Tensor(shape).shape_str() +
                            " in the checkpoint but the model expects " + it->second->value.shape_str());
    seen.insert(name);
    order.emplace_back(it->second, n);
  }
  std::string missing;
  for (const auto& [name, _] : by_name)
    if (!seen.count(name)) missing += (missing.empty() ? "" : ", ") + name;
  if (!missing.empty()) throw CheckpointError("checkpoint is missing parameters: " + missing);
  if (!unexpected.empty()) throw CheckpointError("checkpoint has unknown parameters: " + unexpected);

  std::vector<float> buf;
  for (auto& [p, n] : order) {
    buf.resize(n);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float))))
      throw CheckpointError("checkpoint truncated in payload of " + p->name);
    std::copy(buf.begin(), buf.end(), p->value.values().begin());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint payload");
  return models;
}

}  // namespace s2r::train
