// Copyright 2026 The bevbox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bevbox/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "bevbox/dataset.hpp"
#include "bevbox/error.hpp"
#include "bevbox/harness.hpp"
#include "bevbox/network.hpp"
#include "bevbox/slf.hpp"

namespace bevbox
{

namespace
{

// Raised for inconsistent flags that CLI11 cannot express; reported as a usage error.
struct UsageError : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

std::string utc_now()
{
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string hex(std::uint64_t v)
{
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string one_line(std::string s)
{
  for (char & c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

bool parse_on_off(const std::string & v)
{
  if (v == "on") return true;
  if (v == "off") return false;
  throw UsageError("expected on|off, got '" + v + "'");
}

// Common manifest head: command line and start time.
struct Run
{
  Manifest m;

  Run(int argc, const char * const * argv, std::string_view command)
  {
    std::string line;
    for (int i = 0; i < argc; ++i) {
      if (i > 0) line += ' ';
      line += argv[i];
    }
    m.emplace_back("command", std::string(command));
    m.emplace_back("command_line", line);
    m.emplace_back("started", utc_now());
  }

  void add(std::string k, std::string v) { m.emplace_back(std::move(k), std::move(v)); }

  void finish(const std::filesystem::path & artifact)
  {
    add("finished", utc_now());
    std::filesystem::path p = artifact;
    p += ".manifest";
    write_manifest(p, m);
  }
};

void add_network_config(Run & run, const NetworkConfig & cfg)
{
  run.add("angle_mode", std::string(to_string(cfg.angle_mode)));
  run.add("center_mode", std::string(to_string(cfg.center_mode)));
  run.add("concat", cfg.concat ? "on" : "off");
  run.add("scale", format_double(cfg.scale));
  run.add("loss", std::string(to_string(cfg.loss)));
  run.add("huber_delta", format_double(cfg.huber_delta));
  run.add(
    "loss_weights", format_double(cfg.weights.angle) + "," + format_double(cfg.weights.size) + "," +
                      format_double(cfg.weights.center));
}

void add_train_config(Run & run, const TrainConfig & t)
{
  run.add("epochs", std::to_string(t.epochs));
  run.add("batch", std::to_string(t.batch_size));
  run.add("lr0", format_double(t.lr0));
  run.add("lr_decay_rate", format_double(t.lr_decay_rate));
  run.add("lr_decay_steps", format_double(t.lr_decay_steps));
  run.add("bn_decay_start", format_double(t.bn_decay_start));
  run.add("bn_decay_end", format_double(t.bn_decay_end));
  run.add("adam_beta1", format_double(t.adam_beta1));
  run.add("adam_beta2", format_double(t.adam_beta2));
  run.add("adam_epsilon", format_double(t.adam_epsilon));
  run.add("precision", t.precision == Precision::float32 ? "float32" : "float64");
  run.add("seed", std::to_string(t.seed));
}

}  // namespace

int run_cli(int argc, const char * const * argv, std::ostream & out, std::ostream & err)
{
  CLI::App app{"bevbox: oriented box estimation from bird's-eye-view point clouds"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // gen-synth
  std::string gs_out, gs_mode = "full", gs_class = "car";
  std::size_t gs_count = 0;
  std::uint64_t gs_seed = 0;
  double gs_noise = 0.02;
  auto * gen = app.add_subcommand("gen-synth", "generate synthetic BEV object clouds");
  gen->add_option("--out", gs_out, "output PBEV file")->required();
  gen->add_option("--count", gs_count, "number of samples")->required();
  gen->add_option("--seed", gs_seed)->required();
  gen->add_option("--noise", gs_noise, "Gaussian noise sigma, meters");
  gen->add_option("--mode", gs_mode)->check(CLI::IsMember({"full", "lshape", "single-edge", "mixed"}));
  gen->add_option("--class", gs_class)->check(CLI::IsMember({"car", "pedestrian", "cyclist", "mixed"}));

  // ingest-kitti
  std::string ik_labels, ik_velo, ik_calib, ik_out;
  std::size_t ik_min = kMinObjectPoints;
  auto * ingest = app.add_subcommand("ingest-kitti", "extract object clouds from KITTI");
  ingest->add_option("--labels", ik_labels)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--velodyne", ik_velo)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--calib", ik_calib)->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--out", ik_out)->required();
  ingest->add_option("--min-points", ik_min, "drop objects with this many points or fewer");

  // split
  std::string sp_in, sp_train, sp_test;
  double sp_ratio = 0.8;
  std::uint64_t sp_seed = 0;
  auto * split = app.add_subcommand("split", "shuffle and split a dataset");
  split->add_option("--in", sp_in)->required()->check(CLI::ExistingFile);
  split->add_option("--train", sp_train)->required();
  split->add_option("--test", sp_test)->required();
  split->add_option("--ratio", sp_ratio, "fraction that goes to train")->required();
  split->add_option("--seed", sp_seed)->required();

  // network flags shared by train
  std::string tr_train, tr_val, tr_out, tr_log;
  std::string angle_mode = "sincos2", center_mode = "mean", concat = "on", loss = "mse";
  std::string precision = "float32";
  double scale = 1.0;
  TrainConfig tcfg;
  auto * trn = app.add_subcommand("train", "train a box regressor");
  trn->add_option("--train", tr_train)->required()->check(CLI::ExistingFile);
  trn->add_option("--val", tr_val)->required()->check(CLI::ExistingFile);
  trn->add_option("--out", tr_out, "checkpoint path")->required();
  trn->add_option("--log", tr_log, "per-epoch CSV log");
  trn->add_option("--angle-mode", angle_mode)->check(CLI::IsMember({"direct_theta", "sincos", "sincos2"}));
  trn->add_option("--center-mode", center_mode)->check(CLI::IsMember({"none", "mean", "median"}));
  trn->add_option("--concat", concat)->check(CLI::IsMember({"on", "off"}));
  trn->add_option("--scale", scale);
  trn->add_option("--loss", loss)->check(CLI::IsMember({"mse", "huber"}));
  trn->add_option("--epochs", tcfg.epochs);
  trn->add_option("--batch", tcfg.batch_size);
  trn->add_option("--lr", tcfg.lr0);
  trn->add_option("--seed", tcfg.seed);
  trn->add_option("--precision", precision)->check(CLI::IsMember({"float32", "float64"}));

  // eval
  std::string ev_data, ev_ckpt, ev_slf, ev_report, ev_hist, ev_metric = "err_theta_deg";
  double ev_step_deg = 0.5, ev_bin = 1.0;
  std::uint64_t ev_seed = 0;
  auto * ev = app.add_subcommand("eval", "evaluate a checkpoint or an SLF baseline");
  ev->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);
  auto * o_ckpt = ev->add_option("--ckpt", ev_ckpt)->check(CLI::ExistingFile);
  auto * o_slf = ev->add_option("--slf", ev_slf)->check(CLI::IsMember({"area", "closeness", "variance"}));
  o_ckpt->excludes(o_slf);
  auto * o_step = ev->add_option("--step-deg", ev_step_deg, "SLF search step, degrees");
  o_step->needs(o_slf);
  ev->add_option("--report", ev_report, "per-sample CSV")->required();
  ev->add_option("--hist", ev_hist, "histogram CSV");
  ev->add_option("--hist-metric", ev_metric)
    ->check(CLI::IsMember({"err_c", "err_theta_deg", "abs_err_theta_deg", "iou"}));
  ev->add_option("--hist-bin", ev_bin, "histogram bin width");
  ev->add_option("--seed", ev_seed, "resampling seed for network input");

  // ablate
  std::string ab_train, ab_val, ab_test, ab_grid, ab_out;
  std::uint64_t ab_seed = 0;
  TrainConfig ab_tcfg;
  auto * abl = app.add_subcommand("ablate", "train and evaluate a grid of configurations");
  abl->add_option("--train", ab_train)->required()->check(CLI::ExistingFile);
  abl->add_option("--val", ab_val, "validation set for best-epoch selection")->check(CLI::ExistingFile);
  abl->add_option("--test", ab_test)->required()->check(CLI::ExistingFile);
  abl->add_option("--grid", ab_grid, "e.g. angle=direct_theta,sincos,sincos2;scale=1,1/16")->required();
  abl->add_option("--out", ab_out, "output directory")->required();
  abl->add_option("--seed", ab_seed)->required();
  abl->add_option("--epochs", ab_tcfg.epochs);
  abl->add_option("--batch", ab_tcfg.batch_size);

  // time
  std::string tm_ckpt, tm_data;
  std::size_t tm_batch = 1, tm_reps = 0;
  auto * tim = app.add_subcommand("time", "time inference");
  tim->add_option("--ckpt", tm_ckpt)->required()->check(CLI::ExistingFile);
  tim->add_option("--data", tm_data)->required()->check(CLI::ExistingFile);
  tim->add_option("--batch", tm_batch)->required();
  tim->add_option("--reps", tm_reps)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp & e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError & e) {
    err << "error usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*gen) {
      Run run(argc, argv, "gen-synth");
      SynthConfig cfg;
      cfg.mode = parse_visibility_mode(gs_mode);
      cfg.noise_m = gs_noise;
      if (gs_class == "mixed") {
        cfg.object_class.reset();
      } else {
        cfg.object_class = parse_object_class(gs_class);
      }
      const auto samples = generate_synthetic(cfg, gs_count, gs_seed);
      write_pbev(gs_out, samples);
      run.add("count", std::to_string(gs_count));
      run.add("seed", std::to_string(gs_seed));
      run.add("mode", gs_mode);
      run.add("class", gs_class);
      run.add("noise_m", format_double(cfg.noise_m));
      run.add("points_per_edge", format_double(cfg.points_per_edge));
      run.add("interior_points", format_double(cfg.interior_points));
      run.add("range", format_double(cfg.min_range) + "," + format_double(cfg.max_range));
      run.add(
        "visible_fraction",
        format_double(cfg.min_visible_fraction) + "," + format_double(cfg.max_visible_fraction));
      run.add("out", gs_out);
      run.add("dataset_hash", hex(dataset_hash(samples)));
      run.finish(gs_out);
      out << "wrote " << samples.size() << " samples to " << gs_out << "\n";
    } else if (*ingest) {
      Run run(argc, argv, "ingest-kitti");
      const auto samples = ingest_kitti(ik_labels, ik_velo, ik_calib, ik_min);
      write_pbev(ik_out, samples);
      run.add("labels", ik_labels);
      run.add("velodyne", ik_velo);
      run.add("calib", ik_calib);
      run.add("min_points", std::to_string(ik_min));
      run.add("count", std::to_string(samples.size()));
      run.add("out", ik_out);
      run.add("dataset_hash", hex(dataset_hash(samples)));
      run.finish(ik_out);
      out << "wrote " << samples.size() << " samples to " << ik_out << "\n";
    } else if (*split) {
      Run run(argc, argv, "split");
      auto samples = read_pbev(sp_in);
      const auto in_hash = dataset_hash(samples);
      const auto parts = split_dataset(std::move(samples), sp_ratio, sp_seed);
      write_pbev(sp_train, parts.train);
      write_pbev(sp_test, parts.test);
      run.add("in", sp_in);
      run.add("in_hash", hex(in_hash));
      run.add("ratio", format_double(sp_ratio));
      run.add("seed", std::to_string(sp_seed));
      run.add("train", sp_train);
      run.add("train_hash", hex(dataset_hash(parts.train)));
      run.add("test", sp_test);
      run.add("test_hash", hex(dataset_hash(parts.test)));
      run.finish(sp_train);
      out << "train " << parts.train.size() << " test " << parts.test.size() << "\n";
    } else if (*trn) {
      Run run(argc, argv, "train");
      NetworkConfig cfg;
      cfg.angle_mode = parse_angle_mode(angle_mode);
      cfg.center_mode = parse_center_mode(center_mode);
      cfg.concat = parse_on_off(concat);
      cfg.scale = scale;
      cfg.loss = parse_loss_kind(loss);
      cfg.validate();
      tcfg.precision = precision == "float64" ? Precision::float64 : Precision::float32;
      tcfg.validate();

      const auto train_s = read_pbev(tr_train);
      const auto val_s = read_pbev(tr_val);
      // Training and validation clouds are resampled once, from the run seed.
      auto train_r = resample_all(train_s, kCloudSize, tcfg.seed);
      if (train_r.size() == 1) {
        // batch-norm needs two clouds per batch. An exact copy would give zero variance in
        // every head layer, so add a second, independent resampling of the same object.
        // The whole set is one batch, so the running statistics converge to the batch ones.
        train_r.push_back(resample(train_s[0], kCloudSize, sample_seed(tcfg.seed, 1)));
        run.add("single_sample_resamplings", "2");
      }
      // same seed as training: a validation file equal to the training file gives the same clouds
      const auto val_r = resample_all(val_s, kCloudSize, tcfg.seed);
      const auto result = train(train_r, val_r, cfg, tcfg, [&](const EpochLog & e) {
        out << "epoch " << e.epoch << " loss " << e.train_loss << " val_iou " << e.val_iou << "\n";
      });
      save_checkpoint(result.params, cfg, tr_out);
      if (!tr_log.empty()) {
        write_text_atomic(tr_log, format_epoch_log(result.log));
      }
      add_network_config(run, cfg);
      add_train_config(run, tcfg);
      run.add("train", tr_train);
      run.add("train_hash", hex(dataset_hash(train_s)));
      run.add("val", tr_val);
      run.add("val_hash", hex(dataset_hash(val_s)));
      run.add("best_epoch", std::to_string(result.best_epoch));
      run.add("out", tr_out);
      if (!tr_log.empty()) run.add("log", tr_log);
      run.finish(tr_out);
    } else if (*ev) {
      if (ev_ckpt.empty() == ev_slf.empty()) {
        throw UsageError("eval needs exactly one of --ckpt or --slf");
      }
      Run run(argc, argv, "eval");
      const auto samples = read_pbev(ev_data);
      std::unique_ptr<Estimator> est;
      if (!ev_ckpt.empty()) {
        auto ck = load_checkpoint(ev_ckpt);
        add_network_config(run, ck.config);
        run.add("ckpt", ev_ckpt);
        run.add("seed", std::to_string(ev_seed));
        est = std::make_unique<BoxNetEstimator>(std::move(ck.params), ck.config, ev_seed);
      } else {
        SlfConfig sc;
        sc.criterion = parse_slf_criterion(ev_slf);
        sc.step = ev_step_deg * kPi / 180.0;
        sc.validate();
        run.add("slf", ev_slf);
        run.add("step_deg", format_double(ev_step_deg));
        run.add("d0", format_double(sc.d0));
        est = std::make_unique<SlfEstimator>(sc);
      }
      const auto report = evaluate(*est, samples);
      write_text_atomic(ev_report, format_report_csv(report));
      run.add("data", ev_data);
      run.add("dataset_hash", hex(report.dataset_hash));
      run.add("method", report.method);
      run.add("config_hash", hex(report.config_hash));
      run.add("failed", std::to_string(report.failed));
      run.add("report", ev_report);
      if (!ev_hist.empty()) {
        const auto bins = histogram(report, parse_metric(ev_metric), ev_bin);
        write_text_atomic(ev_hist, format_histogram_csv(bins));
        Run hrun = run;
        hrun.add("hist_metric", ev_metric);
        hrun.add("hist_bin", format_double(ev_bin));
        hrun.finish(ev_hist);
        run.add("hist", ev_hist);
      }
      run.finish(ev_report);
      out << format_summary_csv(report);
    } else if (*abl) {
      Run run(argc, argv, "ablate");
      const auto cells = parse_grid(ab_grid, NetworkConfig{});
      ab_tcfg.seed = ab_seed;
      ab_tcfg.validate();
      const auto train_s = read_pbev(ab_train);
      const auto test_s = read_pbev(ab_test);
      const std::vector<Sample> val_s = ab_val.empty() ? std::vector<Sample>{} : read_pbev(ab_val);
      std::filesystem::create_directories(ab_out);
      const auto rows = ablate(cells, train_s, val_s, test_s, ab_tcfg, ab_seed, [&](const AblationRow & r) {
        out << describe(r.config) << " eval_loss " << r.eval_loss << " iou " << r.mean_iou
            << (r.error.empty() ? "" : " failed: " + one_line(r.error)) << "\n";
      });
      const auto csv = std::filesystem::path(ab_out) / "ablation.csv";
      write_text_atomic(csv, format_ablation_csv(rows));
      run.add("grid", ab_grid);
      add_train_config(run, ab_tcfg);
      run.add("train", ab_train);
      run.add("train_hash", hex(dataset_hash(train_s)));
      if (!ab_val.empty()) {
        run.add("val", ab_val);
        run.add("val_hash", hex(dataset_hash(val_s)));
      }
      run.add("test", ab_test);
      run.add("test_hash", hex(dataset_hash(test_s)));
      run.add("out", csv.string());
      run.finish(csv);
    } else if (*tim) {
      const auto ck = load_checkpoint(tm_ckpt);
      const auto samples = read_pbev(tm_data);
      const auto data = resample_all(samples, kCloudSize, 0);
      const auto rep = time_inference(ck.params, ck.config, data, tm_batch, tm_reps);
      out << "batch=" << rep.batch_size << " reps=" << rep.repetitions << " mean_ms=" << rep.mean_ms
          << " stddev_ms=" << rep.stddev_ms << " per_cloud_ms=" << rep.per_cloud_ms << "\n";
    }
  } catch (const UsageError & e) {
    err << "error usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const InvalidArgument & e) {
    err << "error usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const ParseError & e) {
    err << "error parse: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const CheckpointError & e) {
    err << "error checkpoint: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const IoError & e) {
    err << "error io: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception & e) {
    err << "error runtime: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace bevbox
