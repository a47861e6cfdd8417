#include "ctn/service.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <thread>

#include <httplib.h>

#include "ctn/errors.hpp"
#include "ctn/eval.hpp"
#include "ctn/hitl.hpp"

namespace fs = std::filesystem;

namespace ctn {
namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  send_json(res, status, {{"error", msg}});
}

struct Job {
  std::string id;
  std::string status = "queued";  // queued, running, completed, failed
  int epoch = 0;
  int epochs = 0;
  std::string error;
};

nlohmann::json to_json(const Job& j) {
  nlohmann::json out{{"job", j.id}, {"status", j.status}, {"epoch", j.epoch}, {"epochs", j.epochs}};
  if (!j.error.empty()) out["error"] = j.error;
  return out;
}

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  fs::path checkpoint_path;
  httplib::Server server;

  // Guards dataset, caches and job table; writers take it exclusively.
  std::shared_mutex mu;
  Dataset ds;
  struct Loaded {
    std::string hash;
    ModelParams params;
    Contour exemplar;
  };
  std::optional<Loaded> model;
  std::map<std::string, nlohmann::json> prediction_cache;
  std::string metrics_hash;
  nlohmann::json metrics_cache;
  std::map<std::string, Job> jobs;
  int job_counter = 0;
  std::atomic<bool> job_running{false};
  std::thread worker;

  explicit Impl(ServiceOptions o) : opts(std::move(o)) {
    checkpoint_path = fs::path(opts.checkpoint).is_absolute() ? fs::path(opts.checkpoint)
                                                              : fs::path(opts.root) / opts.checkpoint;
    ds = load_dataset(opts.root);
    routes();
  }

  ~Impl() {
    server.stop();
    if (worker.joinable()) worker.join();
  }

  // Reloads the checkpoint when its bytes changed. Caller holds mu exclusively.
  void refresh_model_locked() {
    if (!fs::exists(checkpoint_path)) {
      model.reset();
      prediction_cache.clear();
      return;
    }
    const std::string bytes = read_file(checkpoint_path.string());
    const std::string h = hex(fnv1a(bytes));
    if (model && model->hash == h) return;
    nlohmann::json extra;
    ModelParams p = parse_checkpoint(bytes, &extra);
    Contour ex = extra.is_object() && extra.contains("exemplar") ? contour_from_json(extra["exemplar"])
                                                                 : ds.exemplar_contour();
    model = Loaded{h, std::move(p), std::move(ex)};
    prediction_cache.clear();
  }

  std::optional<std::vector<Point>> predict_locked(const DataItem& it, nlohmann::json* out) {
    refresh_model_locked();
    if (!model) return std::nullopt;
    auto cached = prediction_cache.find(it.id);
    if (cached == prediction_cache.end()) {
      const auto pred = predict(model->params, it.image, model->exemplar);
      nlohmann::json j = points_to_json(pred.contour);
      j["image_id"] = it.id;
      j["checkpoint"] = model->hash;
      cached = prediction_cache.emplace(it.id, std::move(j)).first;
    }
    if (out) *out = cached->second;
    return points_from_json(cached->second);
  }

  void routes() {
    server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mu);
      nlohmann::json list = nlohmann::json::array();
      for (const auto& it : ds.items)
        list.push_back({{"id", it.id},
                        {"width", it.image.width},
                        {"height", it.image.height},
                        {"corrected", it.corrections.has_value() && !it.corrections->empty()},
                        {"has_ground_truth", it.contour.has_value()}});
      send_json(res, 200, {{"images", list}, {"exemplar", ds.exemplar_id}});
    });

    server.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mu);
      const auto i = ds.find(req.matches[1]);
      if (!i) return send_error(res, 404, "unknown image " + std::string(req.matches[1]));
      res.set_content(encode_png(ds.items[*i].image), "image/png");
    });

    server.Get(R"(/api/predictions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::unique_lock lock(mu);
      const auto i = ds.find(req.matches[1]);
      if (!i) return send_error(res, 404, "unknown image " + std::string(req.matches[1]));
      try {
        nlohmann::json out;
        if (!predict_locked(ds.items[*i], &out)) return send_error(res, 503, "no checkpoint");
        send_json(res, 200, out);
      } catch (const Error& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Post(R"(/api/corrections/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const bool dry_run = req.has_param("dry_run") && req.get_param_value("dry_run") != "0";
      CorrectionSet cs;
      try {
        cs = corrections_from_json(nlohmann::json::parse(req.body));
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, std::string("MalformedJson: ") + e.what());
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      if (!cs.image_id.empty() && cs.image_id != id) return send_error(res, 400, "image_id does not match the URL");
      cs.image_id = id;
      std::unique_lock lock(mu);
      const auto i = ds.find(id);
      if (!i) return send_error(res, 404, "unknown image " + id);
      if (dry_run) {
        try {
          const auto pred = predict_locked(ds.items[*i], nullptr);
          if (!pred) return send_error(res, 503, "no checkpoint");
          nlohmann::json arcs = nlohmann::json::array();
          for (const auto& seg : cs.segments) arcs.push_back(correspondence_arc(*pred, seg));
          nlohmann::json pairs = nlohmann::json::array();
          for (const auto& a : correspond_segments(*pred, cs))
            pairs.push_back({{"pred_index", a.pred_index},
                             {"segment", a.segment},
                             {"point_index", a.point_index},
                             {"target", {a.target.x, a.target.y}}});
          return send_json(res, 200, {{"image_id", id}, {"arcs", arcs}, {"assignment", pairs}});
        } catch (const Error& e) {
          return send_error(res, 500, e.what());
        }
      }
      if (job_running) return send_error(res, 409, "a fine-tune job is running");
      try {
        const fs::path dir = fs::path(opts.root) / "corrections";
        fs::create_directories(dir);
        write_file_atomic((dir / (id + ".json")).string(), corrections_to_json(cs).dump(2));
      } catch (const Error& e) {
        return send_error(res, 500, e.what());
      }
      ds.items[*i].corrections = cs;
      send_json(res, 200, corrections_to_json(cs));
    });

    server.Post("/api/finetune", [this](const httplib::Request& req, httplib::Response& res) {
      TrainConfig cfg = opts.finetune;
      if (!req.body.empty()) {
        try {
          cfg = train_config_from_json(nlohmann::json::parse(req.body), cfg);
        } catch (const nlohmann::json::exception& e) {
          return send_error(res, 400, std::string("MalformedJson: ") + e.what());
        } catch (const Error& e) {
          return send_error(res, 400, e.what());
        }
      }
      std::unique_lock lock(mu);
      if (job_running.exchange(true)) return send_error(res, 409, "a fine-tune job is already running");
      if (worker.joinable()) worker.join();
      Job job;
      job.id = "job-" + std::to_string(++job_counter);
      job.epochs = cfg.epochs;
      jobs[job.id] = job;
      worker = std::thread([this, id = job.id, cfg] { run_job(id, cfg); });
      send_json(res, 202, to_json(job));
    });

    server.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mu);
      const auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) return send_error(res, 404, "unknown job " + std::string(req.matches[1]));
      send_json(res, 200, to_json(it->second));
    });

    server.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
      std::unique_lock lock(mu);
      try {
        refresh_model_locked();
        if (!model) return send_error(res, 503, "no checkpoint");
        Dataset test;
        for (const auto& it : ds.items) {
          if (it.id == ds.exemplar_id) continue;
          if (!it.contour) return send_error(res, 404, "ground truth is not available");
          test.items.push_back(it);
        }
        if (test.items.empty()) return send_error(res, 404, "ground truth is not available");
        if (metrics_hash != model->hash) {
          std::map<std::string, std::vector<Point>> preds;
          for (const auto& it : test.items) preds[it.id] = *predict_locked(it, nullptr);
          EvalReport r = evaluate_predictions(test, preds);
          r.label = "current";
          nlohmann::json out = to_json(r);
          nlohmann::json rows = nlohmann::json::array();
          for (const auto& row : r.rows) rows.push_back({{"id", row.id}, {"iou", row.iou}, {"hd", row.hd}});
          out["rows"] = rows;
          out["checkpoint"] = model->hash;
          metrics_cache = out;
          metrics_hash = model->hash;
        }
        send_json(res, 200, metrics_cache);
      } catch (const Error& e) {
        send_error(res, 500, e.what());
      }
    });
  }

  void run_job(const std::string& id, TrainConfig cfg) {
    auto set = [this, &id](auto&& fn) {
      std::unique_lock lock(mu);
      fn(jobs[id]);
    };
    try {
      Dataset snapshot;
      ModelParams params;
      Contour exemplar({{0, 0}, {1, 0}, {0, 1}});
      {
        std::unique_lock lock(mu);
        refresh_model_locked();
        if (!model) throw Error(Errc::InvalidArgument, "no checkpoint to fine-tune");
        snapshot = ds;
        params = model->params;
        exemplar = model->exemplar;
        jobs[id].status = "running";
      }
      // The checkpoint's exemplar initializes the cascade.
      for (auto& it : snapshot.items)
        if (it.id == snapshot.exemplar_id) it.contour = exemplar;
      const TrainResult r = finetune_hitl(params, snapshot, cfg, [&](const EpochLog& e, const ModelParams&) {
        set([&](Job& j) { j.epoch = e.epoch; });
        return true;
      });
      {
        std::unique_lock lock(mu);
        save_checkpoint(checkpoint_path.string(), r.params, {{"exemplar", contour_to_json(exemplar)}});
        refresh_model_locked();
        jobs[id].status = "completed";
      }
    } catch (const std::exception& e) {
      set([&](Job& j) {
        j.status = "failed";
        j.error = e.what();
      });
    }
    job_running = false;
  }
};

Service::Service(ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}
Service::~Service() = default;

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

void Service::wait_for_jobs() {
  while (impl_->job_running) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  std::unique_lock lock(impl_->mu);
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace ctn
