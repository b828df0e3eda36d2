// SPDX-License-Identifier: Apache-2.0
#include "usrn/run_config.hpp"

#include <cctype>
#include <set>
#include <sstream>

#include "usrn/errors.hpp"

namespace usrn {

namespace {

// Typed access to a table that remembers which keys were read.
class KeyReader {
 public:
  explicit KeyReader(const TextTable& table) : table_(table) {}

  const TextValue* find(const std::string& key) {
    seen_.insert(key);
    const auto it = table_.find(key);
    return it == table_.end() ? nullptr : &it->second;
  }

  template <typename Fn>
  void with(const std::string& key, Fn&& fn) {
    const TextValue* v = find(key);
    if (!v) return;
    try {
      fn(*v);
    } catch (const Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const TextValue& v) { out = v.as_number(); });
  }
  void integer(const std::string& key, int& out) {
    with(key, [&](const TextValue& v) { out = checked_int(v.as_integer()); });
  }
  void integer64(const std::string& key, std::int64_t& out) {
    with(key, [&](const TextValue& v) { out = v.as_integer(); });
  }
  void unsigned64(const std::string& key, std::uint64_t& out) {
    with(key, [&](const TextValue& v) {
      if (v.as_integer() < 0) throw InvalidArgument("must be >= 0");
      out = static_cast<std::uint64_t>(v.as_integer());
    });
  }
  void string(const std::string& key, std::string& out) {
    with(key, [&](const TextValue& v) { out = v.as_string(); });
  }
  void vec3(const std::string& key, Vec3& out) {
    with(key, [&](const TextValue& v) { out = to_vec3(v); });
  }

  static int checked_int(std::int64_t v) {
    if (v < INT32_MIN || v > INT32_MAX) throw InvalidArgument("integer out of range");
    return static_cast<int>(v);
  }

  static Vec3 to_vec3(const TextValue& v) {
    const auto xs = v.as_number_list();
    if (xs.size() != 3) throw InvalidArgument("expected [x, y, z]");
    return Vec3(xs[0], xs[1], xs[2]);
  }

  void reject_unknown() const {
    for (const auto& [key, value] : table_)
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

 private:
  const TextTable& table_;
  std::set<std::string> seen_;
};

DecoderShape read_shape(KeyReader& r, const std::string& prefix, DecoderShape shape) {
  r.integer("train." + prefix + "layers", shape.hidden_layers);
  r.integer("train." + prefix + "width", shape.width);
  r.with("train." + prefix + "activation",
         [&](const TextValue& v) { shape.activation = activation_from_string(v.as_string()); });
  return shape;
}

void read_volume(KeyReader& r, VolumeSource& vol) {
  r.string("volume.raw", vol.raw_path);
  r.string("volume.synthetic", vol.synthetic_name);
  r.with("volume.dims", [&](const TextValue& v) {
    const auto d = v.as_integer_list();
    if (d.size() != 3) throw InvalidArgument("expected [nx, ny, nz]");
    vol.synthetic.dims = {KeyReader::checked_int(d[0]), KeyReader::checked_int(d[1]), KeyReader::checked_int(d[2])};
  });
  r.unsigned64("volume.seed", vol.demo_seed);
  r.integer("volume.blobs", vol.demo_blobs);

  SyntheticTerm term;
  const std::string& name = vol.synthetic_name;
  if (name == "demo") {
    vol.synthetic.terms.clear();
  } else {
    try {
      term.kind = synthetic_kind_from_string(name);
    } catch (const Error& e) {
      throw ConfigError(std::string("config key 'volume.synthetic': ") + e.what());
    }
  }
  // Gaussian mixture
  std::vector<Vec3> centers;
  std::vector<double> widths, amplitudes;
  r.with("volume.centers", [&](const TextValue& v) {
    for (const TextValue& c : v.as_array()) centers.push_back(KeyReader::to_vec3(c));
  });
  r.with("volume.widths", [&](const TextValue& v) { widths = v.as_number_list(); });
  r.with("volume.amplitudes", [&](const TextValue& v) { amplitudes = v.as_number_list(); });
  // Shell, ramp, constant
  r.vec3("volume.center", term.center);
  r.number("volume.radius", term.radius);
  r.number("volume.thickness", term.thickness);
  r.number("volume.amplitude", term.amplitude);
  r.integer("volume.axis", term.axis);
  r.number("volume.value", term.value);

  if (name == "demo") return;
  if (term.kind == SyntheticKind::GaussianMixture) {
    if (centers.empty()) centers.push_back(Vec3::Zero());
    if (widths.empty()) widths.assign(centers.size(), 0.25);
    if (amplitudes.empty()) amplitudes.assign(centers.size(), 1.0);
    if (widths.size() != centers.size() || amplitudes.size() != centers.size())
      throw ConfigError("volume.centers, volume.widths and volume.amplitudes must have equal lengths");
    for (std::size_t i = 0; i < centers.size(); ++i) term.blobs.push_back({centers[i], widths[i], amplitudes[i]});
  }
  vol.synthetic.terms = {term};
}

void read_encoder(KeyReader& r, EncoderSpec& e) {
  r.with("encoder.kind", [&](const TextValue& v) { e.kind = encoder_kind_from_string(v.as_string()); });
  r.with("encoder.grid", [&](const TextValue& v) {
    const auto g = v.as_integer_list();
    if (g.size() != 3) throw InvalidArgument("expected [gx, gy, gz]");
    e.dense.gx = KeyReader::checked_int(g[0]);
    e.dense.gy = KeyReader::checked_int(g[1]);
    e.dense.gz = KeyReader::checked_int(g[2]);
  });
  r.integer("encoder.features", e.dense.features);
  r.integer("encoder.hash_levels", e.hash.levels);
  r.integer("encoder.hash_min_resolution", e.hash.min_resolution);
  r.integer("encoder.hash_max_resolution", e.hash.max_resolution);
  r.integer("encoder.hash_log2_table_size", e.hash.log2_table_size);
  r.integer("encoder.hash_features", e.hash.features);
  r.integer("encoder.fourier_freqs", e.fourier.num_freqs);
}

void read_train(KeyReader& r, TrainConfig& t) {
  r.with("train.kind", [&](const TextValue& v) { t.kind = model_kind_from_string(v.as_string()); });
  r.integer64("train.steps", t.steps);
  r.with("train.batch_size", [&](const TextValue& v) {
    if (v.as_integer() < 1) throw InvalidArgument("must be >= 1");
    t.batch_size = static_cast<std::size_t>(v.as_integer());
  });
  r.with("train.learning_rate", [&](const TextValue& v) { t.learning_rate = v.as_number(); });
  r.number("train.lr_floor", t.lr_floor);
  r.unsigned64("train.seed", t.seed);
  r.integer("train.members", t.members);
  t.decoder = read_shape(r, "decoder_", t.decoder);
  t.single_decoder = read_shape(r, "single_decoder_", t.single_decoder);
  r.number("train.dropout", t.dropout_p);
  r.integer("train.mcd_passes", t.mcd_passes);
  r.number("train.pv_variance_floor", t.pv_variance_floor);
  r.unsigned64("train.de_seed_stride", t.de_seed_stride);
  read_encoder(r, t.encoder);
  r.number("schedule.lambda_min", t.lambda_min);
  r.number("schedule.lambda_max", t.lambda_max);
  r.number("schedule.rate", t.lambda_rate);
}

void read_render(KeyReader& r, RenderSettings& s) {
  r.integer("render.width", s.camera.width);
  r.integer("render.height", s.camera.height);
  r.number("render.fov", s.camera.fov_degrees);
  r.vec3("render.eye", s.camera.eye);
  r.vec3("render.look_at", s.camera.look_at);
  r.vec3("render.up", s.camera.up);
  r.number("render.step", s.step);
  r.number("render.step_ref", s.step_ref);
  r.number("render.opacity_threshold", s.opacity_threshold);
  r.with("render.background", [&](const TextValue& v) {
    const auto c = v.as_number_list();
    if (c.size() != 4) throw InvalidArgument("expected [r, g, b, a]");
    s.background = {c[0], c[1], c[2], c[3]};
  });
  r.number("render.variance_floor", s.variance_floor);
  r.string("render.transfer_function", s.transfer_function);
  r.number("render.top_fraction", s.top_fraction);
}

void read_metrics(KeyReader& r, MetricSettings& m) {
  r.with("metrics.jist_fractions", [&](const TextValue& v) {
    m.jist_fractions = v.as_number_list();
    if (m.jist_fractions.size() != 2) throw InvalidArgument("expected two fractions [low, high]");
  });
  r.integer("metrics.jist_radius", m.jist_radius);
  r.number("metrics.nll_floor", m.nll_floor);
  r.with("metrics.chunk", [&](const TextValue& v) {
    if (v.as_integer() < 1) throw InvalidArgument("must be >= 1");
    m.chunk = static_cast<std::size_t>(v.as_integer());
  });
}

void read_sweep(KeyReader& r, SweepSettings& s) {
  r.with("sweep.lambda_max", [&](const TextValue& v) { s.lambda_max = v.as_number_list(); });
  r.with("sweep.members", [&](const TextValue& v) {
    s.members.clear();
    for (std::int64_t m : v.as_integer_list()) s.members.push_back(KeyReader::checked_int(m));
  });
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void validate_run_config(const RunConfig& c) {
  try {
    validate(canonical(c.train));
    if (c.volume.raw_path.empty()) {
      const Dims& d = c.volume.synthetic.dims;
      check(d.nx >= 2 && d.ny >= 2 && d.nz >= 2, "volume.dims must be >= 2 on every axis");
      check(c.volume.demo_blobs >= 1, "volume.blobs must be >= 1");
      if (c.volume.synthetic_name != "demo") validate(c.volume.synthetic);
    }
    validate(c.render.camera);
    check(c.render.step >= 0 && c.render.step_ref >= 0, "render.step and render.step_ref must be >= 0");
    check(c.render.opacity_threshold > 0 && c.render.opacity_threshold <= 1,
          "render.opacity_threshold must be in (0, 1]");
    check(c.render.top_fraction > 0 && c.render.top_fraction <= 1, "render.top_fraction must be in (0, 1]");
    for (Scalar p : c.metrics.jist_fractions) check(p > 0 && p <= 1, "metrics.jist_fractions must be in (0, 1]");
    check(c.metrics.jist_radius >= 0, "metrics.jist_radius must be >= 0");
    check(c.metrics.nll_floor > 0, "metrics.nll_floor must be > 0");
    for (Scalar l : c.sweep.lambda_max) check(l >= 0, "sweep.lambda_max entries must be >= 0");
    for (int m : c.sweep.members) check(m >= 2, "sweep.members entries must be >= 2");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

RunConfig run_config_from_table(const TextTable& table) {
  KeyReader r(table);
  RunConfig c;
  read_volume(r, c.volume);
  read_train(r, c.train);
  read_render(r, c.render);
  read_metrics(r, c.metrics);
  read_sweep(r, c.sweep);
  r.reject_unknown();
  validate_run_config(c);
  return c;
}

void apply_override(TextTable& table, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
  try {
    table[key] = parse_text_value(value);
  } catch (const FormatError&) {
    // Bare words such as `kind=mdsrn` are strings.
    table[key] = TextValue(TextValue::Storage(value));
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  TextTable table;
  if (!path.empty()) {
    try {
      table = read_text_config(path);
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& o : overrides) apply_override(table, o);
  return run_config_from_table(table);
}

std::string default_config_text() {
  return R"([volume]
raw = ""                  # path to a .raw file with a .meta sidecar; empty uses the synthetic field
synthetic = "demo"        # demo, gaussian-mixture, shell, linear-ramp, constant
dims = [64, 64, 64]
seed = 0                  # demo field seed
blobs = 4                 # demo field gaussian count
centers = [[0, 0, 0]]     # gaussian-mixture
widths = [0.25]
amplitudes = [1.0]
center = [0, 0, 0]        # shell
radius = 0.5
thickness = 0.05
amplitude = 1.0
axis = 0                  # linear-ramp
value = 0.0               # constant

[encoder]
kind = "dense"            # dense, hash, dense+fourier
grid = [24, 24, 24]
features = 8
hash_levels = 4
hash_min_resolution = 4
hash_max_resolution = 32
hash_log2_table_size = 14
hash_features = 2
fourier_freqs = 0

[train]
kind = "rmdsrn"           # mdsrn, rmdsrn, de, pv, mcd
steps = 50000
batch_size = 131072
# learning_rate = 5e-3    # default 5e-3, or 5e-4 for pv
lr_floor = 1e-7
seed = 0
members = 5
decoder_layers = 2
decoder_width = 64
decoder_activation = "relu"   # relu, snake, sine
single_decoder_layers = 3     # pv and mcd
single_decoder_width = 128
single_decoder_activation = "relu"
dropout = 0.1
mcd_passes = 5
pv_variance_floor = 1e-6
de_seed_stride = 1

[schedule]
lambda_min = 0.0
lambda_max = 10.0
rate = 500.0

[render]
width = 512
height = 512
fov = 40.0
eye = [2.6, 1.8, 2.2]
look_at = [0, 0, 0]
up = [0, 0, 1]
step = 0.0                # 0: half a voxel diagonal
step_ref = 0.0            # 0: same as step
opacity_threshold = 0.99
background = [1, 1, 1, 1]
variance_floor = 1e-6
transfer_function = ""    # file with points = [[s, r, g, b, a], ...]
top_fraction = 0.05

[metrics]
jist_fractions = [0.01, 0.05]
jist_radius = 1
nll_floor = 1e-6
chunk = 16384

[sweep]
lambda_max = []
members = []
)";
}

SyntheticSpec resolve_synthetic(const VolumeSource& source) {
  if (source.synthetic_name == "demo")
    return demo_synthetic_spec(source.synthetic.dims, source.demo_seed, source.demo_blobs);
  return source.synthetic;
}

VolumeGrid load_volume(const VolumeSource& source) {
  if (!source.raw_path.empty()) {
    const std::filesystem::path raw(source.raw_path);
    const RawMetadata meta = read_raw_metadata(metadata_path_for(raw));
    return normalize_volume(load_raw_volume(raw, meta));
  }
  return make_synthetic_volume(resolve_synthetic(source));
}

namespace {

std::string quoted(const std::string& s) { return format_text_value(TextValue(TextValue::Storage(s))); }

std::string vec3_literal(const Vec3& v) {
  return "[" + format_number(v[0]) + ", " + format_number(v[1]) + ", " + format_number(v[2]) + "]";
}

}  // namespace

std::map<std::string, std::string> config_echo(const RunConfig& cfg) {
  const TrainConfig t = canonical(cfg.train);
  std::map<std::string, std::string> e;
  const VolumeSource& v = cfg.volume;
  if (!v.raw_path.empty()) {
    e["volume.raw"] = quoted(v.raw_path);
  } else {
    e["volume.synthetic"] = quoted(v.synthetic_name);
    const Dims& d = v.synthetic.dims;
    e["volume.dims"] = "[" + std::to_string(d.nx) + ", " + std::to_string(d.ny) + ", " + std::to_string(d.nz) + "]";
    if (v.synthetic_name == "demo") {
      e["volume.seed"] = std::to_string(v.demo_seed);
      e["volume.blobs"] = std::to_string(v.demo_blobs);
    } else {
      const SyntheticTerm& term = v.synthetic.terms.front();
      switch (term.kind) {
        case SyntheticKind::GaussianMixture: {
          std::string centers = "[", widths = "[", amplitudes = "[";
          for (std::size_t i = 0; i < term.blobs.size(); ++i) {
            const std::string sep = i ? ", " : "";
            centers += sep + vec3_literal(term.blobs[i].center);
            widths += sep + format_number(term.blobs[i].width);
            amplitudes += sep + format_number(term.blobs[i].amplitude);
          }
          e["volume.centers"] = centers + "]";
          e["volume.widths"] = widths + "]";
          e["volume.amplitudes"] = amplitudes + "]";
          break;
        }
        case SyntheticKind::Shell:
          e["volume.center"] = vec3_literal(term.center);
          e["volume.radius"] = format_number(term.radius);
          e["volume.thickness"] = format_number(term.thickness);
          e["volume.amplitude"] = format_number(term.amplitude);
          break;
        case SyntheticKind::LinearRamp: e["volume.axis"] = std::to_string(term.axis); break;
        case SyntheticKind::Constant: e["volume.value"] = format_number(term.value); break;
      }
    }
  }
  e["train.kind"] = quoted(to_string(t.kind));
  e["train.steps"] = std::to_string(t.steps);
  e["train.batch_size"] = std::to_string(t.batch_size);
  e["train.learning_rate"] = format_number(t.effective_learning_rate());
  e["train.lr_floor"] = format_number(t.lr_floor);
  e["train.seed"] = std::to_string(t.seed);
  e["encoder.kind"] = quoted(to_string(t.encoder.kind));
  e["schedule.lambda_min"] = format_number(t.lambda_min);
  e["schedule.lambda_max"] = format_number(t.lambda_max);
  e["schedule.rate"] = format_number(t.lambda_rate);
  switch (t.kind) {
    case ModelKind::Mdsrn:
    case ModelKind::Rmdsrn:
    case ModelKind::De: e["train.members"] = std::to_string(t.members); break;
    case ModelKind::Mcd:
      e["train.dropout"] = format_number(t.dropout_p);
      e["train.mcd_passes"] = std::to_string(t.mcd_passes);
      break;
    case ModelKind::Pv: e["train.pv_variance_floor"] = format_number(t.pv_variance_floor); break;
  }
  if (t.kind == ModelKind::De) e["train.de_seed_stride"] = std::to_string(t.de_seed_stride);
  return e;
}

RenderConfig render_config_for(const RenderSettings& s, const Dims& dims) {
  RenderConfig cfg;
  cfg.step = s.step > 0 ? s.step : default_step(dims);
  cfg.step_ref = s.step_ref > 0 ? s.step_ref : cfg.step;
  cfg.opacity_threshold = s.opacity_threshold;
  cfg.background = s.background;
  cfg.variance_floor = s.variance_floor;
  validate(cfg);
  return cfg;
}

TransferFunction transfer_function_for(const RenderSettings& s) {
  if (s.transfer_function.empty()) return default_transfer_function();
  return load_transfer_function(s.transfer_function);
}

EvaluationSettings evaluation_settings_for(const MetricSettings& m) {
  EvaluationSettings e;
  e.jist_low = m.jist_fractions.at(0);
  e.jist_high = m.jist_fractions.at(1);
  e.jist_radius = m.jist_radius;
  e.nll_floor = m.nll_floor;
  return e;
}

}  // namespace usrn
