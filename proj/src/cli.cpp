// SPDX-License-Identifier: Apache-2.0
#include "usrn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "usrn/checkpoint.hpp"
#include "usrn/errors.hpp"
#include "usrn/metrics.hpp"
#include "usrn/run_config.hpp"

namespace usrn {

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  bool given() const { return !path.empty() || !overrides.empty(); }
  RunConfig load() const { return load_run_config(path, overrides); }
};

void add_config_flags(CLI::App* cmd, ConfigArgs& c) {
  cmd->add_option("-c,--config", c.path, "Run configuration file");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.steps=200")
      ->allow_extra_args(false);
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  return std::filesystem::path(p.string() + suffix);
}

void write_loss_csv(const std::vector<LossReport>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.precision(10);
  out << "step,lr,lambda,L_member,L_var,total\n";
  for (const auto& r : history)
    out << r.step << ',' << r.lr << ',' << r.lambda << ',' << r.member << ',' << r.variance_reg << ',' << r.total
        << '\n';
}

// Ground truth for a checkpoint: the explicit config if given, else the volume recorded at training time.
RunConfig config_for_checkpoint(const ConfigArgs& args, const CheckpointInfo& info) {
  if (args.given()) return args.load();
  std::vector<std::string> echo;
  for (const auto& [k, v] : info.training.config)
    if (k.rfind("volume.", 0) == 0) echo.push_back(k + "=" + v);
  return load_run_config({}, echo);
}

struct Reconstruction {
  VolumeGrid truth;
  ReconstructedFields fields;
};

void save_field(const std::filesystem::path& raw, const Dims& dims, const std::vector<Scalar>& values,
                const std::string& name) {
  std::vector<float> f(values.begin(), values.end());
  save_raw_volume(raw, make_volume(dims, std::move(f)));
  write_raw_metadata(metadata_path_for(raw), RawMetadata{dims, "f32le", name});
}

std::vector<Scalar> scaled_to_unit(std::vector<Scalar> v) {
  const Scalar hi = v.empty() ? 0 : *std::max_element(v.begin(), v.end());
  if (hi > 0)
    for (Scalar& x : v) x /= hi;
  return v;
}

int cmd_synth(const ConfigArgs& cfg_args, const std::string& out_path, std::ostream& out) {
  const RunConfig cfg = cfg_args.load();
  if (!cfg.volume.raw_path.empty()) throw ConfigError("synth needs a synthetic volume source, not volume.raw");
  const VolumeGrid vol = make_synthetic_volume(resolve_synthetic(cfg.volume));
  const std::filesystem::path raw(out_path);
  save_raw_volume(raw, vol);
  write_raw_metadata(metadata_path_for(raw), RawMetadata{vol.dims, "f32le", cfg.volume.synthetic_name});
  out << "wrote " << raw.string() << " (" << vol.dims.nx << 'x' << vol.dims.ny << 'x' << vol.dims.nz << ") and "
      << metadata_path_for(raw).string() << '\n';
  return kExitOk;
}

int cmd_train(const ConfigArgs& cfg_args, const std::string& ckpt, std::string loss_csv, std::int64_t log_every,
              std::ostream& out, std::ostream& err) {
  const RunConfig cfg = cfg_args.load();
  const VolumeGrid vol = load_volume(cfg.volume);
  StepCallback log;
  if (log_every > 0)
    log = [&](const LossReport& r) {
      if (r.step % log_every == 0 || r.step == cfg.train.steps)
        err << "step " << r.step << "/" << cfg.train.steps << "  lr " << r.lr << "  lambda " << r.lambda
            << "  L_member " << r.member << "  L_var " << r.variance_reg << "  total " << r.total << '\n';
    };
  const TrainResult result = train_model(vol, cfg.train, log);
  TrainingMetadata meta;
  meta.steps_completed = static_cast<std::int64_t>(result.history.size());
  meta.seed = cfg.train.seed;
  meta.config = config_echo(cfg);
  save_checkpoint(result.model, meta, ckpt);
  if (loss_csv.empty()) loss_csv = sibling(ckpt, ".loss.csv").string();
  write_loss_csv(result.history, loss_csv);
  out << "wrote " << ckpt << " (" << to_string(result.model.kind) << ", " << result.model.parameter_count()
      << " parameters) and " << loss_csv << '\n';
  return kExitOk;
}

int cmd_evaluate(const ConfigArgs& cfg_args, const std::string& ckpt, const std::string& csv_path,
                 std::string label, const std::string& fields_prefix, std::ostream& out) {
  CheckpointInfo info;
  const UncertainModel model = load_checkpoint(ckpt, &info);
  const RunConfig cfg = config_for_checkpoint(cfg_args, info);
  const VolumeGrid truth = load_volume(cfg.volume);
  const ReconstructedFields fields = reconstruct_fields(model, truth.dims, cfg.metrics.chunk);
  if (label.empty()) label = to_string(model.kind);
  const MetricRow row =
      evaluate_fields(label, fields.mean, fields.variance, truth, evaluation_settings_for(cfg.metrics));
  const std::string text = metric_csv_header() + "\n" + metric_csv_line(row) + "\n";
  if (csv_path.empty() || csv_path == "-") {
    out << text;
  } else {
    std::ofstream f(csv_path);
    if (!f) throw IoError("cannot write '" + csv_path + "'");
    f << text;
  }
  if (!fields_prefix.empty()) {
    save_field(fields_prefix + "_mean.raw", fields.dims, fields.mean, "mean");
    save_field(fields_prefix + "_variance.raw", fields.dims, fields.variance, "variance");
  }
  return kExitOk;
}

int cmd_render(const ConfigArgs& cfg_args, const std::string& ckpt, const std::string& volume_path,
               const std::string& mode, const std::string& out_dir, const std::string& prefix, std::ostream& out) {
  if (!ckpt.empty() && !volume_path.empty()) throw InvalidArgument("pass either --checkpoint or --volume");
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  auto emit = [&](const RenderedImage& img, const std::string& what) {
    const auto path = dir / (prefix + "_" + what + ".png");
    write_png(img, path);
    out << "wrote " << path.string() << '\n';
  };
  const bool all = mode == "all";

  if (ckpt.empty()) {
    RunConfig cfg = cfg_args.load();
    if (!volume_path.empty()) cfg.volume.raw_path = volume_path;
    if (!all && mode != "mean") throw InvalidArgument("a plain volume only supports --mode mean");
    const VolumeGrid vol = load_volume(cfg.volume);
    emit(raymarch_mean(VolumeSampler(vol), cfg.render.camera, transfer_function_for(cfg.render),
                       render_config_for(cfg.render, vol.dims)),
         "mean");
    return kExitOk;
  }

  CheckpointInfo info;
  const UncertainModel model = load_checkpoint(ckpt, &info);
  const RunConfig cfg = config_for_checkpoint(cfg_args, info);
  const VolumeGrid truth = load_volume(cfg.volume);
  const TransferFunction tf = transfer_function_for(cfg.render);
  const RenderConfig rc = render_config_for(cfg.render, truth.dims);
  const Camera& cam = cfg.render.camera;

  if (all || mode == "mean") emit(raymarch_mean(ModelMeanSampler(model), cam, tf, rc), "mean");
  if (mode == "statistical" || (all && model.kind != ModelKind::Pv))
    emit(raymarch_statistical(ModelMemberSampler(model), cam, tf, rc), "statistical");
  if (all || mode == "variance" || mode == "error") {
    const ReconstructedFields fields = reconstruct_fields(model, truth.dims, cfg.metrics.chunk);
    if (all || mode == "variance") {
      const auto v = scaled_to_unit(fields.variance);
      emit(render_scalar_overlay(truth.dims, v, cfg.render.top_fraction, cam, tf, rc), "variance");
    }
    if (all || mode == "error") {
      std::vector<Scalar> e(fields.mean.size());
      for (std::size_t i = 0; i < e.size(); ++i) {
        const Scalar d = fields.mean[i] - truth.values[i];
        e[i] = d * d;
      }
      emit(render_scalar_overlay(truth.dims, scaled_to_unit(std::move(e)), cfg.render.top_fraction, cam, tf, rc),
           "error");
    }
  }
  if (!all && mode != "mean" && mode != "statistical" && mode != "variance" && mode != "error")
    throw InvalidArgument("unknown render mode '" + mode + "'");
  return kExitOk;
}

std::string format_lambda(Scalar v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

int cmd_sweep(const ConfigArgs& cfg_args, const std::string& csv_path, const std::string& loss_dir,
              std::ostream& out, std::ostream& err) {
  const RunConfig cfg = cfg_args.load();
  const VolumeGrid vol = load_volume(cfg.volume);
  std::vector<Scalar> lambdas = cfg.sweep.lambda_max;
  if (lambdas.empty()) lambdas.push_back(cfg.train.lambda_max);
  std::vector<int> members = cfg.sweep.members;
  if (members.empty()) members.push_back(cfg.train.members);

  std::ofstream file;
  std::ostream* sink = &out;
  if (!csv_path.empty() && csv_path != "-") {
    file.open(csv_path);
    if (!file) throw IoError("cannot write '" + csv_path + "'");
    sink = &file;
  }
  if (!loss_dir.empty()) std::filesystem::create_directories(loss_dir);
  *sink << metric_csv_header() << '\n';
  for (Scalar lambda : lambdas) {
    for (int m : members) {
      TrainConfig t = cfg.train;
      t.kind = ModelKind::Rmdsrn;
      t.lambda_max = lambda;
      t.lambda_min = std::min(t.lambda_min, lambda);
      t.members = m;
      const std::string label =
          to_string(canonical(t).kind) + "/lambda_max=" + format_lambda(lambda) + "/members=" + std::to_string(m);
      err << "sweep: training " << label << '\n';
      const TrainResult result = train_model(vol, t);
      const ReconstructedFields fields = reconstruct_fields(result.model, vol.dims, cfg.metrics.chunk);
      *sink << metric_csv_line(evaluate_fields(label, fields.mean, fields.variance, vol,
                                               evaluation_settings_for(cfg.metrics)))
            << '\n';
      sink->flush();
      if (!loss_dir.empty()) {
        std::string name = label;
        std::replace(name.begin(), name.end(), '/', '_');
        write_loss_csv(result.history, std::filesystem::path(loss_dir) / (name + ".loss.csv"));
      }
    }
  }
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural volume representations with per-point uncertainty", "usrn"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ConfigArgs synth_cfg, train_cfg, eval_cfg, render_cfg, sweep_cfg;
  std::string synth_out, train_out, train_loss, eval_ckpt, eval_out, eval_label, eval_fields, render_ckpt,
      render_volume, render_mode = "all", render_dir = ".", render_prefix = "render", sweep_out, sweep_loss_dir,
      info_ckpt;
  std::int64_t log_every = 0;

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic volume as .raw + .meta");
  add_config_flags(synth, synth_cfg);
  synth->add_option("-o,--out", synth_out, "Output .raw path")->required();

  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint and loss CSV");
  add_config_flags(train, train_cfg);
  train->add_option("-o,--out", train_out, "Checkpoint path")->required();
  train->add_option("--loss-csv", train_loss, "Loss history CSV (default: <checkpoint>.loss.csv)");
  train->add_option("--log-every", log_every, "Print losses every N steps (0: quiet)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Reconstruct the volume from a checkpoint and score it");
  add_config_flags(evaluate, eval_cfg);
  evaluate->add_option("checkpoint", eval_ckpt, "Checkpoint path")->required();
  evaluate->add_option("-o,--out", eval_out, "Metric CSV path (default: stdout)");
  evaluate->add_option("--label", eval_label, "Model column value (default: model kind)");
  evaluate->add_option("--fields-out", eval_fields, "Also write <prefix>_mean.raw and <prefix>_variance.raw");

  CLI::App* render = app.add_subcommand("render", "Render mean, statistical and overlay images");
  add_config_flags(render, render_cfg);
  render->add_option("--checkpoint", render_ckpt, "Checkpoint to render");
  render->add_option("--volume", render_volume, "Raw volume to render instead of a model");
  render->add_option("--mode", render_mode, "mean, statistical, variance, error or all")
      ->check(CLI::IsMember({"mean", "statistical", "variance", "error", "all"}));
  render->add_option("--out-dir", render_dir, "Output directory");
  render->add_option("--prefix", render_prefix, "Image file prefix");

  CLI::App* sweep = app.add_subcommand("sweep", "Train and score every (lambda_max, members) combination");
  add_config_flags(sweep, sweep_cfg);
  sweep->add_option("-o,--out", sweep_out, "Metric CSV path (default: stdout)");
  sweep->add_option("--loss-dir", sweep_loss_dir, "Directory for per-cell loss CSVs");

  CLI::App* info = app.add_subcommand("info", "Print checkpoint metadata");
  info->add_option("checkpoint", info_ckpt, "Checkpoint path")->required();

  CLI::App* defaults = app.add_subcommand("defaults", "Print every config key with its default");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usrn: " << e.what() << "\n" << "run 'usrn --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_cfg, synth_out, out);
    if (train->parsed()) return cmd_train(train_cfg, train_out, train_loss, log_every, out, err);
    if (evaluate->parsed()) return cmd_evaluate(eval_cfg, eval_ckpt, eval_out, eval_label, eval_fields, out);
    if (render->parsed())
      return cmd_render(render_cfg, render_ckpt, render_volume, render_mode, render_dir, render_prefix, out);
    if (sweep->parsed()) return cmd_sweep(sweep_cfg, sweep_out, sweep_loss_dir, out, err);
    if (info->parsed()) {
      out << describe(read_checkpoint_info(info_ckpt));
      return kExitOk;
    }
    if (defaults->parsed()) {
      out << default_config_text();
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "usrn: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FileNotFound& e) {
    err << "usrn: missing file: " << e.what() << '\n';
    return kExitMissingFile;
  } catch (const FormatError& e) {
    err << "usrn: bad file: " << e.what() << '\n';
    return kExitFormat;
  } catch (const std::exception& e) {
    err << "usrn: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace usrn
