// Command-line front end: synth | train | eval | gradcheck | count | ablate.
// Every command reads an optional JSON config (unknown keys rejected, flags
// override file values), writes its artifacts under --out, and records a
// run manifest with the config hash and seed so runs are reproducible.

#include "rppg/checkpoint.hpp"
#include "rppg/data_io.hpp"
#include "rppg/eval.hpp"
#include "rppg/gradcheck_suite.hpp"
#include "rppg/synth.hpp"
#include "rppg/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rppg;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  std::string precision = "f64";
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& context) {
  if (!j.is_object()) return;
  std::string offending;
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) offending += (offending.empty() ? "" : ", ") + key;
  if (!offending.empty())
    throw ValidationError("unknown config keys in " + context + ": " + offending);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_manifest(const GlobalOpts& g, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& artifacts) {
  json m;
  m["command"] = command;
  m["config_hash"] = fnv1a64(config.dump());
  m["seed"] = seed;
  m["precision"] = g.precision;
  m["threads"] = g.threads;
  m["artifacts"] = artifacts;
  m["config"] = config;
  std::ofstream os(fs::path(g.out_dir) / "run_manifest.json");
  if (!os) throw IoError("cannot write run manifest in " + g.out_dir);
  os << m.dump(2) << '\n';
}

// --------------------------------------------------------------------------
// Config parsing shared by train/eval/ablate.
// --------------------------------------------------------------------------
TrainConfig parse_train_config(const json& t, std::uint64_t seed) {
  check_keys(t, {"loss", "order", "c1", "c2", "epochs", "batch_size", "adadelta", "sgd_lr", "seed",
                 "shuffle", "even_shifts_only", "clip_length"},
             "train");
  TrainConfig cfg;
  cfg.loss = parse_loss(t.value("loss", "mse"));
  cfg.arch.order = t.value("order", 2);
  cfg.arch.c1 = t.value("c1", 16);
  cfg.arch.c2 = t.value("c2", 32);
  cfg.epochs = t.value("epochs", 50);
  cfg.batch_size = t.value("batch_size", 4);
  if (t.contains("adadelta")) {
    check_keys(t["adadelta"], {"rho", "eps", "lr"}, "train.adadelta");
    cfg.adadelta_rho = t["adadelta"].value("rho", 0.9);
    cfg.adadelta_eps = t["adadelta"].value("eps", 1e-6);
    cfg.adadelta_lr = t["adadelta"].value("lr", 1.0);
  }
  if (t.contains("sgd_lr")) {
    if (cfg.loss != LossKind::Talos)
      throw ValidationError("train.sgd_lr is only meaningful with loss == talos");
    cfg.sgd_lr = t["sgd_lr"].get<double>();
  }
  cfg.seed = t.value("seed", seed);
  cfg.shuffle = t.value("shuffle", true);
  cfg.even_shifts_only = t.value("even_shifts_only", false);
  return cfg;
}

SynthSubjectSpec parse_subject_spec(const json& s, double fps) {
  check_keys(s, {"subject_id", "hr_trajectory", "true_offset", "modulation_depth", "noise_sigma",
                 "skin_mask", "seed"},
             "subject");
  SynthSubjectSpec spec;
  spec.subject_id = s.value("subject_id", "s01");
  if (s.contains("hr_trajectory"))
    for (const json& p : s["hr_trajectory"])
      spec.hr_trajectory.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  else
    spec.hr_trajectory = {{0.0, 90.0}};
  spec.true_offset = s.value("true_offset", 0);
  spec.modulation_depth = s.value("modulation_depth", 0.1);
  spec.noise_sigma = s.value("noise_sigma", 0.0);
  spec.skin_mask = s.value("skin_mask", 1.0);
  spec.seed = s.value("seed", 0);
  spec.validate(fps);
  return spec;
}

template <class S>
std::vector<EvalVideo<S>> load_dataset_videos(const json& cfg, int threads, Index clip_length) {
  std::vector<EvalVideo<S>> videos;
  if (cfg.contains("cohort_manifest")) {
    const auto samples = load_cohort<S>(cfg["cohort_manifest"].get<std::string>());
    videos = to_eval_videos(samples, clip_length);
  } else if (cfg.contains("dataset_index")) {
    const DatasetIndex index = DatasetIndex::load(cfg["dataset_index"].get<std::string>());
    const DatasetKind kind =
        cfg.value("dataset_kind", "pure") == "ubfc" ? DatasetKind::Ubfc : DatasetKind::Pure;
    const auto entries = index.split(cfg.value("split", "train"));
    const auto records = load_records<S>(entries, kind, threads);
    for (const auto& rec : records) {
      EvalVideo<S> v;
      v.subject_id = rec.subject_id;
      v.clips = chunk_sequences(rec.video, rec.groundtruth.samples, rec.fps, rec.subject_id, clip_length);
      if (!v.clips.empty()) videos.push_back(std::move(v));
    }
  } else {
    throw ValidationError("config needs either cohort_manifest or dataset_index");
  }
  if (videos.empty()) throw ValidationError("dataset produced no usable clips");
  return videos;
}

// --------------------------------------------------------------------------
// synth
// --------------------------------------------------------------------------
template <class S>
int cmd_synth(const GlobalOpts& g, const json& cfg) {
  check_keys(cfg, {"subjects", "n_subjects", "template", "videos_per_subject", "frames", "height",
                   "width", "fps", "withhold_offsets", "seed", "out_dir"},
             "synth config");
  const double fps = cfg.value("fps", 30.0);
  const Index frames = cfg.value("frames", 256);
  const Index height = cfg.value("height", 8);
  const Index width = cfg.value("width", 8);
  const int videos_per_subject = cfg.value("videos_per_subject", 1);
  const std::uint64_t seed = g.seed.value_or(cfg.value("seed", 0));

  std::vector<SynthSubjectSpec> specs;
  if (cfg.contains("subjects")) {
    for (const json& s : cfg["subjects"]) specs.push_back(parse_subject_spec(s, fps));
  } else {
    const SynthSubjectSpec tmpl =
        cfg.contains("template") ? parse_subject_spec(cfg["template"], fps) : SynthSubjectSpec{"tmpl", {{0.0, 90.0}}};
    specs = make_cohort_specs(cfg.value("n_subjects", 3), tmpl, fps, seed);
  }
  if (!cfg.contains("subjects"))
    for (auto& s : specs) s.validate(fps);

  const auto samples = generate_cohort<S>(specs, videos_per_subject, frames, height, width, fps);
  const fs::path cohort_dir = fs::path(g.out_dir) / "cohort";
  save_cohort(cohort_dir, samples, cfg.value("withhold_offsets", false));

  write_manifest(g, "synth", cfg, seed, {(cohort_dir / "manifest.json").string()});
  std::cout << "wrote " << samples.size() << " samples to " << cohort_dir.string() << '\n';
  return 0;
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------
template <class S>
int cmd_train(const GlobalOpts& g, const json& cfg) {
  check_keys(cfg, {"train", "cohort_manifest", "dataset_index", "dataset_kind", "split", "out_dir",
                   "clip_length"},
             "train config");
  const Index clip_length = cfg.value("clip_length", 256);
  TrainConfig tc = parse_train_config(cfg.value("train", json::object()), g.seed.value_or(0));
  if (g.seed) tc.seed = *g.seed;

  const auto videos = load_dataset_videos<S>(cfg, g.threads, clip_length);
  TrainResult<S> result = train(tc, flatten_clips(videos));

  const fs::path out(g.out_dir);
  std::vector<std::string> artifacts;
  const fs::path ckpt = out / "checkpoint.rtc";
  save_checkpoint(ckpt, result.model);
  artifacts.push_back(ckpt.string());

  {
    const fs::path log_path = out / "train_log.jsonl";
    std::ofstream os(log_path);
    for (const EpochLog& e : result.log)
      os << json({{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}, {"wall_ms", e.wall_ms}}).dump()
         << '\n';
    artifacts.push_back(log_path.string());
  }
  if (tc.loss == LossKind::Talos) {
    const fs::path reg_path = out / "theta_registry.tsv";
    std::ofstream os(reg_path);
    result.registry.export_table(os);
    artifacts.push_back(reg_path.string());
  }
  write_manifest(g, "train", cfg, tc.seed, artifacts);
  std::cout << "trained " << tc.epochs << " epochs; final loss "
            << (result.log.empty() ? 0.0 : result.log.back().loss) << '\n';
  return 0;
}

// --------------------------------------------------------------------------
// eval
// --------------------------------------------------------------------------
template <class S>
int cmd_eval(const GlobalOpts& g, const json& cfg) {
  check_keys(cfg, {"checkpoint", "cohort_manifest", "dataset_index", "dataset_kind", "split",
                   "protocol", "clip_mean_bpm", "clip_length", "dump_signals", "out_dir"},
             "eval config");
  if (!cfg.contains("checkpoint")) throw ValidationError("eval config needs a checkpoint path");
  const Index clip_length = cfg.value("clip_length", 256);
  TdmModel<S> model = load_checkpoint<S>(cfg["checkpoint"].get<std::string>());
  const auto videos = load_dataset_videos<S>(cfg, g.threads, clip_length);

  const Protocol protocol = parse_protocol(cfg.value("protocol", "sequence"));
  const EvalReport report = evaluate(model, videos, protocol, cfg.value("clip_mean_bpm", false));

  const fs::path out(g.out_dir);
  std::vector<std::string> artifacts;
  {
    std::ofstream os(out / "report.json");
    os << report_to_json(report).dump(2) << '\n';
    artifacts.push_back((out / "report.json").string());
  }
  {
    std::ofstream os(out / "report.csv");
    write_report_csv(os, report);
    artifacts.push_back((out / "report.csv").string());
  }
  if (cfg.value("dump_signals", false)) {
    for (std::size_t vi = 0; vi < videos.size(); ++vi) {
      char name[64];
      std::snprintf(name, sizeof(name), "signals_v%03zu.csv", vi);
      std::ofstream os(out / name);
      os << "t_seconds,predicted,reference\n";
      os.precision(10);
      Index t0 = 0;
      for (const Clip<S>& clip : videos[vi].clips) {
        const auto pred = model.forward(clip.video, Mode::Infer);
        for (Index i = 0; i < clip.target.size(); ++i)
          os << static_cast<double>(t0 + i) / clip.fps << ',' << static_cast<double>(pred.array()[i])
             << ',' << clip.target[i] << '\n';
        t0 += clip.target.size();
      }
      artifacts.push_back((out / name).string());
    }
  }
  write_manifest(g, "eval", cfg, g.seed.value_or(0), artifacts);
  std::cout << "protocol=" << to_string(report.protocol) << " mae=" << report.mae
            << " rmse=" << report.rmse << " r=" << report.pearson_r << '\n';
  return 0;
}

// --------------------------------------------------------------------------
// gradcheck
// --------------------------------------------------------------------------
template <class S>
int cmd_gradcheck(int n_seeds, std::uint64_t seed) {
  const auto results = run_gradcheck_suite<S>(n_seeds, seed);
  bool all = true;
  for (const OpCheckResult& r : results) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.op << "  max_rel_err=" << r.max_rel_err
              << '\n';
    all = all && r.pass;
  }
  std::cout << (all ? "all ops pass" : "gradient check FAILED") << '\n';
  return all ? 0 : 1;
}

// --------------------------------------------------------------------------
// count
// --------------------------------------------------------------------------
int cmd_count(const TdmArch& arch, Index frames, Index height, Index width) {
  const long long params = count_params(arch);
  const long long macs = count_macs(arch, frames, height, width);
  std::cout << "params=" << params << '\n';
  std::cout << "macs=" << macs << " (" << static_cast<double>(macs) / 1e9 << " G, T=" << frames << ", "
            << height << "x" << width << ")\n";
  return 0;
}

// --------------------------------------------------------------------------
// ablate
// --------------------------------------------------------------------------
template <class S>
int cmd_ablate(const GlobalOpts& g, const json& cfg) {
  check_keys(cfg, {"train", "cohort_manifest", "dataset_index", "dataset_kind", "split", "orders",
                   "losses", "clip_length", "out_dir"},
             "ablate config");
  const Index clip_length = cfg.value("clip_length", 256);
  TrainConfig base = parse_train_config(cfg.value("train", json::object()), g.seed.value_or(0));
  if (g.seed) base.seed = *g.seed;

  std::vector<int> orders = cfg.value("orders", std::vector<int>{0, 1, 2});
  std::vector<LossKind> losses;
  if (cfg.contains("losses"))
    for (const json& l : cfg["losses"]) losses.push_back(parse_loss(l.get<std::string>()));
  else
    losses = {LossKind::Mse, LossKind::Npc, LossKind::Mcc, LossKind::Talos};

  const auto videos = load_dataset_videos<S>(cfg, g.threads, clip_length);
  const auto cells = ablate(base, videos, orders, losses, g.threads);

  const fs::path out(g.out_dir);
  {
    std::ofstream os(out / "ablation.json");
    os << ablation_to_json(cells).dump(2) << '\n';
  }
  {
    std::ofstream os(out / "ablation.csv");
    write_ablation_csv(os, cells);
  }
  write_manifest(g, "ablate", cfg, base.seed,
                 {(out / "ablation.json").string(), (out / "ablation.csv").string()});
  std::cout << "wrote " << cells.size() << " ablation cells\n";
  return 0;
}

template <class S>
int dispatch(const std::string& command, const GlobalOpts& g, const json& cfg, const TdmArch& arch,
             Index frames, Index height, Index width, int gc_seeds) {
  if (command == "synth") return cmd_synth<S>(g, cfg);
  if (command == "train") return cmd_train<S>(g, cfg);
  if (command == "eval") return cmd_eval<S>(g, cfg);
  if (command == "gradcheck") return cmd_gradcheck<S>(gc_seeds, g.seed.value_or(7));
  if (command == "count") return cmd_count(arch, frames, height, width);
  if (command == "ablate") return cmd_ablate<S>(g, cfg);
  throw ValidationError("unknown command " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training and evaluation engine for video heart-rate estimation"};
  app.require_subcommand(1);

  GlobalOpts g;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  app.add_option("--config", g.config_path, "JSON config file")->capture_default_str();
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", seed_flag, "seed override")->each([&](const std::string&) { seed_given = true; });
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str();
  app.add_option("--precision", g.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();

  app.add_subcommand("synth", "generate a synthetic cohort");
  app.add_subcommand("train", "train a model");
  app.add_subcommand("eval", "evaluate a checkpoint");
  auto* sc_gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op");
  int gc_seeds = 20;
  sc_gradcheck->add_option("--seeds", gc_seeds, "random seeds per op")->capture_default_str();
  auto* sc_count = app.add_subcommand("count", "parameter and MAC accounting");
  TdmArch arch;
  Index frames = 256, height = 128, width = 128;
  sc_count->add_option("--c1", arch.c1)->capture_default_str();
  sc_count->add_option("--c2", arch.c2)->capture_default_str();
  sc_count->add_option("--order", arch.order)->capture_default_str();
  sc_count->add_option("--frames", frames)->capture_default_str();
  sc_count->add_option("--height", height)->capture_default_str();
  sc_count->add_option("--width", width)->capture_default_str();
  app.add_subcommand("ablate", "order x loss comparison grid");

  CLI11_PARSE(app, argc, argv);
  if (seed_given) g.seed = seed_flag;

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json cfg = load_config(g.config_path);
    if (cfg.contains("out_dir") && g.out_dir == "out") g.out_dir = cfg["out_dir"].get<std::string>();
    if (command != "count") fs::create_directories(g.out_dir);
    if (g.precision == "f32")
      return dispatch<float>(command, g, cfg, arch, frames, height, width, gc_seeds);
    return dispatch<double>(command, g, cfg, arch, frames, height, width, gc_seeds);
  } catch (const ValidationError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: runtime: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 4;
  }
}
