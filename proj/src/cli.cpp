#include "ctn/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ctn/errors.hpp"
#include "ctn/eval.hpp"
#include "ctn/hitl.hpp"
#include "ctn/service.hpp"
#include "ctn/simd/kernels.hpp"

namespace fs = std::filesystem;

namespace ctn {
namespace {

struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  auto* o = app->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
}

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, path + ": " + e.what());
  }
}

TrainConfig train_config(const Common& c, CLI::App* app) {
  TrainConfig cfg = TrainConfig::desk_preset();
  if (!c.config.empty()) {
    const auto j = read_json_file(c.config);
    if (j.value("preset", std::string()) == "full") cfg = TrainConfig::full_preset();
    cfg = train_config_from_json(j, cfg);
  }
  if (app->count("--seed")) cfg.seed = c.seed;
  return cfg;
}

nlohmann::json checkpoint_extra(const Contour& exemplar, const TrainConfig& cfg) {
  return {{"exemplar", contour_to_json(exemplar)}, {"train", to_json(cfg)}};
}

struct LoadedModel {
  ModelParams params;
  std::optional<Contour> exemplar;
};

LoadedModel load_model(const std::string& path) {
  nlohmann::json extra;
  LoadedModel m;
  m.params = load_checkpoint(path, &extra);
  if (extra.is_object() && extra.contains("exemplar")) m.exemplar = contour_from_json(extra["exemplar"]);
  return m;
}

const Contour& model_exemplar(const LoadedModel& m, const Dataset& ds) {
  return m.exemplar ? *m.exemplar : ds.exemplar_contour();
}

// Items with ground truth other than the exemplar.
Dataset held_out(const Dataset& ds) {
  Dataset out;
  out.exemplar_id = ds.exemplar_id;
  out.n_vertices = ds.n_vertices;
  for (const auto& it : ds.items) {
    if (it.id == ds.exemplar_id) continue;
    if (!it.contour) throw Error(Errc::MissingGroundTruth, "no ground truth for " + it.id);
    out.items.push_back(it);
  }
  return out;
}

std::string utc_stamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void print_report(const EvalReport& r) {
  std::printf("%-20s n=%zu iou=%.4f+-%.4f hd=%.3f+-%.3f\n", r.label.c_str(), r.rows.size(), r.mean_iou, r.std_iou,
              r.mean_hd, r.std_hd);
}

// Runs a training loop writing ckpt_epoch_{k}.bin, train_log.jsonl and model.bin under out.
template <typename Fn>
void train_to_dir(const std::string& out, const TrainConfig& cfg, const Contour& exemplar, int every, Fn&& train) {
  fs::create_directories(out);
  const fs::path dir(out);
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw Error(Errc::Io, "cannot write " + (dir / "train_log.jsonl").string());
  const auto extra = checkpoint_extra(exemplar, cfg);
  const TrainResult r = train([&](const EpochLog& e, const ModelParams& p) {
    log << to_json(e).dump() << '\n';
    log.flush();
    if (e.epoch % every == 0 || e.epoch == cfg.epochs)
      save_checkpoint((dir / ("ckpt_epoch_" + std::to_string(e.epoch) + ".bin")).string(), p, extra);
    std::fprintf(stderr, "epoch %d loss %.6g%s\n", e.epoch, e.loss_total,
                 e.train_iou ? (" iou " + std::to_string(*e.train_iou)).c_str() : "");
    return true;
  });
  save_checkpoint((dir / "model.bin").string(), r.params, extra);
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidArgument, "bad value '" + tok + "'");
    }
  }
  return out;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"One-shot contour segmentation"};
  app.require_subcommand(1);

  Common c;
  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string family = "superellipse";
  int count = 51;
  bool pick = false;
  add_common(synth, c, true);
  synth->add_option("--family", family, "ellipse, superellipse or bean");
  synth->add_option("--count", count, "Number of images");
  synth->add_flag("--select-exemplar", pick, "Choose the exemplar by minimum mean feature distance");

  // train
  auto* train = app.add_subcommand("train", "One-shot training");
  std::string data;
  int epochs = -1;
  int every = 10;
  add_common(train, c, true);
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--epochs", epochs, "Override the epoch count");
  train->add_option("--checkpoint-every", every, "Checkpoint interval in epochs")->check(CLI::PositiveNumber);

  // predict
  auto* pred = app.add_subcommand("predict", "Write predicted contours");
  std::string ckpt;
  add_common(pred, c, true);
  pred->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  pred->add_option("--data", data, "Dataset directory")->required();

  // evaluate
  auto* evalc = app.add_subcommand("evaluate", "Score predictions against ground truth");
  std::string predictions, stamp;
  add_common(evalc, c, false);
  evalc->add_option("--checkpoint", ckpt, "Model checkpoint");
  evalc->add_option("--predictions", predictions, "Directory of predicted contours");
  evalc->add_option("--data", data, "Dataset directory")->required();
  evalc->add_option("--stamp", stamp, "Report directory name (default: UTC time)");

  // finetune
  auto* fine = app.add_subcommand("finetune", "Fine-tune with corrections");
  double simulate = 0.0;
  double threshold = 3.0;
  add_common(fine, c, true);
  fine->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  fine->add_option("--data", data, "Dataset directory")->required();
  fine->add_option("--epochs", epochs, "Override the epoch count");
  fine->add_option("--checkpoint-every", every, "Checkpoint interval in epochs")->check(CLI::PositiveNumber);
  fine->add_option("--simulate-worst", simulate, "Simulate corrections on this fraction of worst images")
      ->check(CLI::Range(0.0, 1.0));
  fine->add_option("--threshold", threshold, "Simulated correction threshold in px");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Experiment suites");
  std::string suite, test_dir, values;
  double pdx = 5.0, pdy = 5.0, pdt = 5.0;
  add_common(sweep, c, true);
  sweep->add_option("--suite", suite, "ablation, perturbation, lambda1, lambda2, lambda3, blocks, exemplar")->required();
  sweep->add_option("--data", data, "Training dataset directory")->required();
  sweep->add_option("--test", test_dir, "Test dataset directory")->required();
  sweep->add_option("--values", values, "Comma-separated values (ids for exemplar)");
  sweep->add_option("--checkpoint", ckpt, "Model checkpoint (perturbation)");
  sweep->add_option("--dx", pdx);
  sweep->add_option("--dy", pdy);
  sweep->add_option("--dtheta", pdt, "degrees");
  sweep->add_option("--stamp", stamp, "Report directory name (default: UTC time)");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP project service");
  std::string project;
  std::string host = "127.0.0.1";
  int port = 8080;
  add_common(serve, c, false);
  serve->add_option("--project", project, "Project directory (default $CTN_PROJECT_ROOT)");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--checkpoint", ckpt, "Checkpoint path, relative to the project");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (*synth) {
      FamilySpec spec;
      if (!c.config.empty()) spec = family_spec_from_json(read_json_file(c.config));
      if (synth->count("--family")) spec.family = family_from_name(family);
      Dataset ds = generate_synthetic(spec, count, c.seed);
      if (pick) ds.exemplar_id = select_exemplar(ds);
      save_dataset(ds, c.out);
      std::printf("wrote %zu images to %s (exemplar %s)\n", ds.items.size(), c.out.c_str(), ds.exemplar_id.c_str());
    } else if (*train) {
      TrainConfig cfg = train_config(c, train);
      if (epochs >= 0) cfg.epochs = epochs;
      Dataset ds = load_dataset(data);
      cfg.n_vertices = static_cast<int>(ds.exemplar_contour().size());
      std::fprintf(stderr, "kernels: %s\n", std::string(simd::kernels().name).c_str());
      train_to_dir(c.out, cfg, ds.exemplar_contour(), every,
                   [&](const EpochCallback& cb) { return train_one_shot(ds, cfg, cb); });
    } else if (*pred) {
      const LoadedModel m = load_model(ckpt);
      const Dataset ds = load_dataset(data);
      fs::create_directories(c.out);
      for (const auto& it : ds.items) {
        const auto p = predict(m.params, it.image, model_exemplar(m, ds));
        nlohmann::json j = points_to_json(p.contour);
        write_file_atomic((fs::path(c.out) / (it.id + ".json")).string(), j.dump(2));
      }
      std::printf("wrote %zu predictions to %s\n", ds.items.size(), c.out.c_str());
    } else if (*evalc) {
      if (ckpt.empty() == predictions.empty()) {
        std::fprintf(stderr, "error: give exactly one of --checkpoint or --predictions\n");
        return 2;
      }
      const Dataset ds = load_dataset(data);
      const Dataset test = held_out(ds);
      EvalReport r;
      if (!ckpt.empty()) {
        const LoadedModel m = load_model(ckpt);
        r = evaluate(m.params, model_exemplar(m, ds), test);
      } else {
        std::map<std::string, std::vector<Point>> preds;
        for (const auto& it : test.items)
          preds[it.id] = points_from_json(read_json_file((fs::path(predictions) / (it.id + ".json")).string()));
        r = evaluate_predictions(test, preds);
      }
      r.label = "evaluate";
      print_report(r);
      if (!c.out.empty()) {
        const std::string dir = write_reports(c.out, "evaluate", stamp.empty() ? utc_stamp() : stamp, {r});
        std::printf("reports in %s\n", dir.c_str());
      }
    } else if (*fine) {
      TrainConfig cfg = train_config(c, fine);
      if (epochs >= 0) cfg.epochs = epochs;
      const LoadedModel m = load_model(ckpt);
      Dataset ds = load_dataset(data);
      const Contour exemplar = model_exemplar(m, ds);
      for (auto& it : ds.items)
        if (it.id == ds.exemplar_id) it.contour = exemplar;
      cfg.n_vertices = m.params.config.n_vertices;
      if (simulate > 0.0) {
        const auto ids = select_worst(ds, m.params, simulate);
        ds = attach_simulated_corrections(ds, m.params, ids, threshold);
        std::fprintf(stderr, "simulated corrections on %zu images\n", ids.size());
      }
      train_to_dir(c.out, cfg, exemplar, every,
                   [&](const EpochCallback& cb) { return finetune_hitl(m.params, ds, cfg, cb); });
    } else if (*sweep) {
      TrainConfig cfg = train_config(c, sweep);
      const Dataset train_ds = load_dataset(data);
      const Dataset test = held_out(load_dataset(test_dir));
      cfg.n_vertices = static_cast<int>(train_ds.exemplar_contour().size());
      std::vector<EvalReport> reports;
      if (suite == "ablation") {
        reports = run_ablation(train_ds, test, cfg);
      } else if (suite == "perturbation") {
        if (ckpt.empty()) {
          std::fprintf(stderr, "error: perturbation needs --checkpoint\n");
          return 2;
        }
        const LoadedModel m = load_model(ckpt);
        const Contour& ex = model_exemplar(m, train_ds);
        EvalReport base = evaluate(m.params, ex, test);
        base.label = "unperturbed";
        reports.push_back(base);
        reports.push_back(run_perturbation(m.params, ex, test, pdx, pdy, pdt, cfg.seed));
      } else if (suite == "exemplar") {
        std::vector<std::string> ids;
        std::stringstream ss(values);
        std::string tok;
        while (std::getline(ss, tok, ',')) ids.push_back(tok);
        if (ids.empty()) ids.push_back(select_exemplar(train_ds));
        reports = run_exemplar_sweep(train_ds, test, cfg, ids);
      } else {
        SweepAxis axis;
        try {
          axis = sweep_axis_from_name(suite);
        } catch (const Error& e) {
          std::fprintf(stderr, "error: %s\n", e.what());
          return 2;
        }
        reports = run_sweep(train_ds, test, cfg, axis, parse_values(values));
      }
      for (const auto& r : reports) print_report(r);
      const std::string dir = write_reports(c.out, suite, stamp.empty() ? utc_stamp() : stamp, reports);
      std::printf("reports in %s\n", dir.c_str());
    } else if (*serve) {
      if (project.empty()) {
        const char* env = std::getenv("CTN_PROJECT_ROOT");
        if (!env) {
          std::fprintf(stderr, "error: --project or CTN_PROJECT_ROOT is required\n");
          return 2;
        }
        project = env;
      }
      ServiceOptions opts;
      opts.root = project;
      if (!ckpt.empty()) opts.checkpoint = ckpt;
      opts.finetune = train_config(c, serve);
      Service svc(opts);
      const int bound = svc.bind(host, port);
      if (bound < 0) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
      std::printf("serving %s on http://%s:%d\n", project.c_str(), host.c_str(), bound);
      std::fflush(stdout);
      svc.run();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace ctn
