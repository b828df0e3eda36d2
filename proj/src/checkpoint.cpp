// SPDX-License-Identifier: Apache-2.0
#include "usrn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "usrn/errors.hpp"

namespace usrn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr std::array<char, 4> kMagic{'U', 'S', 'R', 'N'};
constexpr std::size_t kPreamble = 12;

json encoder_to_json(const EncoderSpec& e) {
  return json{{"kind", to_string(e.kind)},
              {"dense", {{"gx", e.dense.gx}, {"gy", e.dense.gy}, {"gz", e.dense.gz}, {"features", e.dense.features}}},
              {"hash",
               {{"levels", e.hash.levels},
                {"min_resolution", e.hash.min_resolution},
                {"max_resolution", e.hash.max_resolution},
                {"log2_table_size", e.hash.log2_table_size},
                {"features", e.hash.features}}},
              {"fourier", {{"num_freqs", e.fourier.num_freqs}}}};
}

EncoderSpec encoder_from_json(const json& j) {
  EncoderSpec e;
  e.kind = encoder_kind_from_string(j.at("kind").get<std::string>());
  const json& d = j.at("dense");
  e.dense = {d.at("gx").get<int>(), d.at("gy").get<int>(), d.at("gz").get<int>(), d.at("features").get<int>()};
  const json& h = j.at("hash");
  e.hash = {h.at("levels").get<int>(), h.at("min_resolution").get<int>(), h.at("max_resolution").get<int>(),
            h.at("log2_table_size").get<int>(), h.at("features").get<int>()};
  e.fourier.num_freqs = j.at("fourier").at("num_freqs").get<int>();
  return e;
}

json decoder_to_json(const MlpSpec& m) {
  return json{{"input_dim", m.input_dim},   {"hidden_layers", m.hidden_layers},
              {"width", m.width},           {"output_dim", m.output_dim},
              {"activation", to_string(m.activation)}, {"dropout_p", m.dropout_p}};
}

MlpSpec decoder_from_json(const json& j) {
  MlpSpec m;
  m.input_dim = j.at("input_dim").get<int>();
  m.hidden_layers = j.at("hidden_layers").get<int>();
  m.width = j.at("width").get<int>();
  m.output_dim = j.at("output_dim").get<int>();
  m.activation = activation_from_string(j.at("activation").get<std::string>());
  m.dropout_p = j.at("dropout_p").get<Scalar>();
  return m;
}

// Tensors in serialization order; ensemble members get a "memberN/" prefix.
std::vector<std::pair<std::string, ParamTensor*>> named_tensors(UncertainModel& model) {
  std::vector<std::pair<std::string, ParamTensor*>> out;
  if (model.kind == ModelKind::De) {
    auto& de = std::get<DeepEnsemble>(model.network);
    for (std::size_t i = 0; i < de.members.size(); ++i)
      for (ParamTensor* p : de.members[i].parameters())
        out.emplace_back("member" + std::to_string(i) + "/" + p->name, p);
  } else {
    for (ParamTensor* p : model.parameters()) out.emplace_back(p->name, p);
  }
  return out;
}

const MlpSpec& decoder_of(const UncertainModel& model) {
  switch (model.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn: return std::get<MultiDecoderModel>(model.network).decoders.front().spec;
    case ModelKind::De: return std::get<DeepEnsemble>(model.network).members.front().decoder.spec;
    case ModelKind::Pv:
    case ModelKind::Mcd: return std::get<SrnModel>(model.network).decoder.spec;
  }
  throw InvalidArgument("unknown model kind");
}

const EncoderSpec& encoder_of(const UncertainModel& model) {
  switch (model.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn: return std::get<MultiDecoderModel>(model.network).encoder.spec;
    case ModelKind::De: return std::get<DeepEnsemble>(model.network).members.front().encoder.spec;
    case ModelKind::Pv:
    case ModelKind::Mcd: return std::get<SrnModel>(model.network).encoder.spec;
  }
  throw InvalidArgument("unknown model kind");
}

int members_of(const UncertainModel& model) {
  switch (model.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn: return static_cast<int>(std::get<MultiDecoderModel>(model.network).members());
    case ModelKind::De: return static_cast<int>(std::get<DeepEnsemble>(model.network).members.size());
    case ModelKind::Pv:
    case ModelKind::Mcd: return 1;
  }
  return 1;
}

// Fresh model with the right architecture; values are overwritten on load.
UncertainModel skeleton(const CheckpointInfo& info) {
  Rng rng(0);
  UncertainModel m;
  m.kind = info.kind;
  m.mcd_passes = info.mcd_passes;
  m.variance_floor = info.variance_floor;
  m.inference_seed = info.inference_seed;
  switch (info.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn:
      m.network = make_multi_decoder_model(info.encoder, info.decoder, info.members, rng);
      break;
    case ModelKind::De: {
      DeepEnsemble de;
      for (int i = 0; i < info.members; ++i) de.members.push_back(make_srn_model(info.encoder, info.decoder, rng));
      m.network = std::move(de);
      break;
    }
    case ModelKind::Pv:
    case ModelKind::Mcd: m.network = make_srn_model(info.encoder, info.decoder, rng); break;
  }
  return m;
}

CheckpointInfo info_from_header(const json& h, std::uint32_t version) {
  CheckpointInfo info;
  info.version = version;
  info.kind = model_kind_from_string(h.at("kind").get<std::string>());
  info.encoder = encoder_from_json(h.at("encoder"));
  info.decoder = decoder_from_json(h.at("decoder"));
  info.members = h.at("members").get<int>();
  info.mcd_passes = h.at("mcd_passes").get<int>();
  info.variance_floor = h.at("variance_floor").get<Scalar>();
  info.inference_seed = h.at("inference_seed").get<std::uint64_t>();
  const json& t = h.at("training");
  info.training.steps_completed = t.at("steps_completed").get<std::int64_t>();
  info.training.seed = t.at("seed").get<std::uint64_t>();
  info.training.config = t.at("config").get<std::map<std::string, std::string>>();
  for (const json& r : h.at("tensors")) {
    TensorRecord rec{r.at("name").get<std::string>(), r.at("shape").get<std::vector<std::size_t>>()};
    std::size_t n = 1;
    for (std::size_t d : rec.shape) n *= d;
    info.parameter_count += n;
    info.tensors.push_back(std::move(rec));
  }
  return info;
}

struct RawHeader {
  CheckpointInfo info;
  std::uint64_t data_offset = 0;
};

RawHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat checkpoint '" + path.string() + "'");
  std::array<char, kPreamble> pre{};
  if (file_size < kPreamble || !in.read(pre.data(), kPreamble))
    throw FormatError("checkpoint '" + path.string() + "' is truncated");
  if (!std::equal(kMagic.begin(), kMagic.end(), pre.begin()))
    throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
  std::uint32_t version = 0, header_len = 0;
  std::memcpy(&version, pre.data() + 4, 4);
  std::memcpy(&header_len, pre.data() + 8, 4);
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  if (file_size < kPreamble + header_len) throw FormatError("checkpoint '" + path.string() + "' is truncated");
  std::string text(header_len, '\0');
  in.read(text.data(), header_len);
  RawHeader out;
  try {
    out.info = info_from_header(json::parse(text), version);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  out.data_offset = kPreamble + header_len;
  const std::uint64_t expected = out.data_offset + out.info.parameter_count * sizeof(double);
  if (file_size != expected)
    throw FormatError("checkpoint '" + path.string() + "' is corrupt or truncated: " + std::to_string(file_size) +
                      " bytes, header declares " + std::to_string(expected));
  return out;
}

std::ifstream open_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FileNotFound("checkpoint '" + path.string() + "' does not exist");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return in;
}

}  // namespace

void save_checkpoint(const UncertainModel& model, const TrainingMetadata& training,
                     const std::filesystem::path& path) {
  // parameters() hands out mutable pointers; nothing below writes through them.
  auto tensors = named_tensors(const_cast<UncertainModel&>(model));
  json records = json::array();
  for (const auto& [name, t] : tensors) records.push_back({{"name", name}, {"shape", t->shape}});
  const json header{{"kind", to_string(model.kind)},
                    {"encoder", encoder_to_json(encoder_of(model))},
                    {"decoder", decoder_to_json(decoder_of(model))},
                    {"members", members_of(model)},
                    {"mcd_passes", model.mcd_passes},
                    {"variance_floor", model.variance_floor},
                    {"inference_seed", model.inference_seed},
                    {"training",
                     {{"steps_completed", training.steps_completed},
                      {"seed", training.seed},
                      {"config", training.config}}},
                    {"tensors", records}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto header_len = static_cast<std::uint32_t>(text.size());
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t->values.data()),
              static_cast<std::streamsize>(t->values.size() * sizeof(double)));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in = open_checkpoint(path);
  return read_header(in, path).info;
}

UncertainModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info_out) {
  std::ifstream in = open_checkpoint(path);
  const RawHeader header = read_header(in, path);
  UncertainModel model = skeleton(header.info);
  auto tensors = named_tensors(model);
  if (tensors.size() != header.info.tensors.size())
    throw FormatError("checkpoint tensor list does not match its architecture");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const TensorRecord& rec = header.info.tensors[i];
    if (rec.name != tensors[i].first || rec.shape != tensors[i].second->shape)
      throw FormatError("checkpoint tensor '" + rec.name + "' does not match the architecture");
  }
  for (auto& [name, t] : tensors) {
    if (!in.read(reinterpret_cast<char*>(t->values.data()),
                 static_cast<std::streamsize>(t->values.size() * sizeof(double))))
      throw FormatError("checkpoint '" + path.string() + "' is truncated");
  }
  if (info_out) *info_out = header.info;
  return model;
}

std::string describe(const CheckpointInfo& info) {
  std::ostringstream out;
  out << "format version: " << info.version << '\n'
      << "model kind: " << to_string(info.kind) << '\n'
      << "encoder: " << to_string(info.encoder.kind);
  if (info.encoder.kind != EncoderKind::Hash)
    out << " grid " << info.encoder.dense.gx << 'x' << info.encoder.dense.gy << 'x' << info.encoder.dense.gz
        << " features " << info.encoder.dense.features;
  else
    out << " levels " << info.encoder.hash.levels << " resolution " << info.encoder.hash.min_resolution << ".."
        << info.encoder.hash.max_resolution << " table 2^" << info.encoder.hash.log2_table_size << " features "
        << info.encoder.hash.features;
  if (info.encoder.fourier.num_freqs > 0) out << " fourier " << info.encoder.fourier.num_freqs;
  out << '\n'
      << "decoder: " << info.decoder.hidden_layers << " hidden x " << info.decoder.width << ' '
      << to_string(info.decoder.activation) << ", outputs " << info.decoder.output_dim;
  if (info.decoder.dropout_p > 0) out << ", dropout " << info.decoder.dropout_p;
  out << '\n'
      << "members: " << info.members << '\n'
      << "parameters: " << info.parameter_count << " in " << info.tensors.size() << " tensors\n"
      << "steps completed: " << info.training.steps_completed << '\n'
      << "seed: " << info.training.seed << '\n';
  for (const auto& [k, v] : info.training.config) out << "config " << k << " = " << v << '\n';
  return out.str();
}

}  // namespace usrn
