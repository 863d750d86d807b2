/*
 * Copyright 2026 The fuselab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FUSELAB_CALIBRATION_HPP
#define FUSELAB_CALIBRATION_HPP

#include "fuselab/volume.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace fuselab {

inline constexpr double kLogitEpsilon = 1e-6;

/// Platt scaling: calibrated p = sigmoid(a * logit + b).
struct PlattParams
{
  double a = 1.0;
  double b = 0.0;

  void validate() const;
};

struct CalibrationSample
{
  double logit = 0.0;
  bool correct = false;
};

double sigmoid(double t);

/// ln(p' / (1 - p')) with p' = clamp(p, epsilon, 1 - epsilon).
double prob_to_logit(double p, double epsilon = kLogitEpsilon);

/// Summed negative log likelihood of the samples under sigmoid(a z + b).
double platt_nll(std::span<const CalibrationSample> samples, const PlattParams &params);

/// Minimizes platt_nll with damped Newton steps from (1, 0). The two-parameter
/// objective is convex, and every accepted step decreases it, so the result
/// never scores worse than the identity transform. Throws ValidationError if
/// the samples are all correct or all incorrect.
PlattParams platt_fit(std::span<const CalibrationSample> samples);

ProbabilityVolume platt_apply(const ProbabilityVolume &prob_map, const PlattParams &params,
                              double epsilon = kLogitEpsilon);

/// One sample per (atlas, masked voxel): the logit of the network probability
/// and whether the atlas label matches the ground truth there.
std::vector<CalibrationSample> collect_samples(std::span<const ProbabilityVolume> prob_maps,
                                               std::span<const LabelVolume> atlas_segs,
                                               const LabelVolume &target_seg,
                                               const MaskVolume &mask);

/// {"a": <real>, "b": <real>}
void write_platt_params(const PlattParams &params, const std::filesystem::path &path);
PlattParams read_platt_params(const std::filesystem::path &path);

} // namespace fuselab

#endif
