#pragma once

#include <memory>
#include <string>

#include "ctn/training.hpp"

namespace ctn {

struct ServiceOptions {
  std::string root;                      // dataset directory as read by load_dataset
  std::string checkpoint = "model.bin";  // relative to root unless absolute
  TrainConfig finetune;                  // settings for POST /api/finetune
};

// HTTP front end over one project directory.
//   GET  /api/images              ids, correction flags
//   GET  /api/images/{id}         image/png
//   GET  /api/predictions/{id}    contour from the current checkpoint
//   POST /api/corrections/{id}    store a correction set (?dry_run=1 previews the assignment)
//   POST /api/finetune            start a fine-tune job
//   GET  /api/jobs/{job}          job status
//   GET  /api/metrics             evaluation against ground truth, when present
class Service {
 public:
  explicit Service(ServiceOptions opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds to port (0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void run();
  void stop();
  // Blocks until no fine-tune job is running.
  void wait_for_jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ctn
