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

#ifndef FUSELAB_FUSION_HPP
#define FUSELAB_FUSION_HPP

#include "fuselab/calibration.hpp"
#include "fuselab/probsource.hpp"
#include "fuselab/volume.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fuselab {

/// Symmetric n x n matrix of joint atlas error probabilities at one voxel.
class DependencyMatrix
{
public:
  /// Row-major entries; checked for symmetry and non-negativity.
  DependencyMatrix(std::size_t n, std::vector<double> entries);

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  std::span<const double> entries() const { return entries_; }
  double trace() const;

private:
  std::size_t n_;
  std::vector<double> entries_;
};

/// Atlas weights at one voxel. They sum to one but may be negative.
struct WeightVector
{
  std::vector<double> weights;

  double sum() const;
};

enum class FusionMethod
{
  JLF,
  PV
};

struct FusionConfig
{
  FusionMethod method = FusionMethod::JLF;
  double pv_threshold = 0.5;
  /// Ridge added to M as ridge_alpha * trace(M) / n (floor kRidgeFloor); 0 disables it.
  double ridge_alpha = 1e-6;
  double jlf_fallback_threshold = 0.5;

  void validate() const;
};

inline constexpr double kRidgeFloor = 1e-12;

/// M(i, j) = e_i * e_j.
DependencyMatrix build_dependency_matrix(std::span<const double> error_values);

/// Absolute ridge for a relative coefficient, as used by jlf_fuse.
double effective_ridge(const DependencyMatrix &m, double ridge_alpha);

/// w = (M + alpha I)^-1 1 / (1^t (M + alpha I)^-1 1), alpha absolute.
/// Throws NumericalError if the regularized matrix is singular.
WeightVector solve_weights(const DependencyMatrix &m, double ridge_alpha);

/// Joint label fusion with the product-form dependency matrix and weighted
/// voting over the labels present at each voxel (ties: smallest label).
LabelVolume jlf_fuse(std::span<const LabelVolume> atlas_segs, std::span<const ErrorField> error_volumes,
                     const FusionConfig &cfg, unsigned threads = 1);

/// Mode of the labels of atlases whose error is below threshold; UNASSIGNED
/// where no atlas qualifies.
LabelVolume plurality_vote(std::span<const LabelVolume> atlas_segs,
                           std::span<const ProbabilityVolume> error_volumes, double threshold,
                           unsigned threads = 1);

/// Replaces UNASSIGNED voxels of `fused` by the fallback label.
LabelVolume merge_fallback(const LabelVolume &fused, const LabelVolume &fallback);

struct PipelineConfig
{
  FusionConfig fusion;
  IntensityScoreConfig score;
  std::optional<PatchSearchConfig> patch_search;
  unsigned threads = 1;
};

/// Target + warped atlases -> fused segmentation.
///
/// Error values come from the network probability maps when given (after
/// optional Platt calibration), otherwise from intensity differences, with
/// patch-search refined labels and scores when patch_search is set. A
/// fallback segmentation fills PV's unassigned voxels, and JLF voxels
/// where every atlas error exceeds jlf_fallback_threshold.
LabelVolume fuse_pipeline(const IntensityVolume &target, std::span<const AtlasPair> atlases,
                          std::span<const ProbabilityVolume> prob_maps,
                          const std::optional<PlattParams> &platt,
                          const std::optional<LabelVolume> &fallback, const PipelineConfig &cfg);

} // namespace fuselab

#endif
