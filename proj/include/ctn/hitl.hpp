#pragma once

#include <string>
#include <vector>

#include "ctn/corrections.hpp"
#include "ctn/data.hpp"
#include "ctn/model.hpp"

namespace ctn {

// Ranks items by Hausdorff distance between prediction and ground truth,
// worst first, and returns the first ceil(fraction * count) ids (ties by id).
// Throws MissingGroundTruth if any item lacks a ground-truth contour.
std::vector<std::string> select_worst(const Dataset& ds, const ModelParams& params, double fraction);

// Runs the model on every listed item and simulates corrections against its
// ground truth; returns a copy of ds with those corrections attached.
Dataset attach_simulated_corrections(const Dataset& ds, const ModelParams& params,
                                     const std::vector<std::string>& ids, double threshold = 3.0);

}  // namespace ctn
