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

#ifndef FUSELAB_SYNTH_HPP
#define FUSELAB_SYNTH_HPP

#include "fuselab/volume.hpp"

#include <cstdint>
#include <vector>

namespace fuselab {

struct SynthSpec
{
  Dims dims{16, 16, 16};
  std::uint32_t n_labels = 4;
  std::uint32_t n_atlases = 5;
  double corruption_rate = 0.2;
  double intensity_noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthDataset
{
  IntensityVolume target_image;
  LabelVolume target_seg;
  std::vector<AtlasPair> atlases;
};

/// Intensity level of a label before noise.
float label_intensity(std::uint16_t label);

/// Voronoi-blob target with labels 1..n_labels, and atlases made by
/// relabeling each voxel with probability corruption_rate to a uniformly
/// chosen different label. Deterministic in the seed.
SynthDataset synth_dataset(const SynthSpec &spec);

/// A stand-in fallback segmentation: the target labels corrupted at the given
/// rate, from a stream independent of the atlases.
LabelVolume synth_fallback(const LabelVolume &target_seg, std::uint32_t n_labels, double corruption_rate,
                           std::uint64_t seed);

} // namespace fuselab

#endif
