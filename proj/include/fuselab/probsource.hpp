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

#ifndef FUSELAB_PROBSOURCE_HPP
#define FUSELAB_PROBSOURCE_HPP

#include "fuselab/volume.hpp"

namespace fuselab {

/// Exponent and neighborhood of the intensity-difference error score.
/// The neighborhood is the (2 * radius + 1)^3 cube, clipped at the borders.
struct IntensityScoreConfig
{
  double beta = 1.0;
  std::size_t radius = 2;

  void validate() const;
};

struct PatchSearchConfig
{
  std::size_t search_radius = 3;
  std::size_t patch_radius = 2;
};

/// score(x) = [ sum_{y in N(x)} (target(y) - atlas(y))^2 ]^beta. Unbounded above.
ScoreVolume intensity_error_score(const IntensityVolume &target, const IntensityVolume &atlas,
                                  const IntensityScoreConfig &cfg, unsigned threads = 1);

/// Complement of a network "atlas label is correct" probability.
ProbabilityVolume network_error_prob(const ProbabilityVolume &prob_map);

struct RefinedAtlas
{
  LabelVolume labels;
  ScoreVolume scores;
};

/// Local patch search: at each voxel, pick the displacement (within
/// search_radius, target voxel displaced must stay inside the volume) whose
/// atlas patch best matches the target patch, and take the atlas label from
/// there. Patch terms whose displaced sample leaves the volume are skipped.
/// Ties keep the zero displacement, then the lexicographically smallest
/// (dz, dy, dx).
RefinedAtlas patch_search_refine(const IntensityVolume &target, const IntensityVolume &atlas_img,
                                 const LabelVolume &atlas_seg, const IntensityScoreConfig &score_cfg,
                                 const PatchSearchConfig &search_cfg, unsigned threads = 1);

} // namespace fuselab

#endif
