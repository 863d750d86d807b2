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

#ifndef FUSELAB_ANALYSIS_HPP
#define FUSELAB_ANALYSIS_HPP

#include "fuselab/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fuselab {

// ---------------------------------------------------------------- Dice

struct DiceReport
{
  std::map<std::uint16_t, double> per_label;
  double average = 0.0;
};

/// Dice per label. A label absent from both segmentations scores 1.
DiceReport dice(const LabelVolume &seg_a, const LabelVolume &seg_b,
                std::span<const std::uint16_t> labels);

/// Labels present in either segmentation, excluding background (0) and UNASSIGNED.
std::vector<std::uint16_t> present_labels(const LabelVolume &seg_a, const LabelVolume &seg_b);

nlohmann::ordered_json to_json(const DiceReport &report);
DiceReport dice_report_from_json(const nlohmann::json &j);

// ---------------------------------------------------------------- t-scores

inline constexpr double kTScoreClamp = 1000.0;

/// One-sided Welch t of incorrect-atlas versus correct-atlas error values,
/// positive when the incorrect atlases score higher. Sets too small for a
/// finite statistic map to +1000 (incorrect set deficient, i.e. mostly
/// correct) or -1000 (correct set deficient); both singletons use the sign of
/// the mean difference. Zero variance maps to +-1000 by the sign of the mean
/// difference, or 0 for equal means.
double one_sided_tscore(std::span<const double> incorrect, std::span<const double> correct);

TScoreVolume tscore_map(const LabelVolume &target_seg, std::span<const LabelVolume> atlas_segs,
                        std::span<const ErrorField> error_volumes, unsigned threads = 1);

// ---------------------------------------------------------------- oracle

enum class OracleMode
{
  G,  ///< independent noise per (voxel, atlas)
  GS  ///< one noise value per voxel, shared by all atlases
};

struct OracleConfig
{
  OracleMode mode = OracleMode::G;
  double sigma = 0.2;
  double p_correct = 0.4;
  double p_incorrect = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground-truth driven error probabilities: p_correct where the atlas agrees
/// with the target, p_incorrect elsewhere, plus Gaussian noise, clamped to
/// [0, 1]. Noise is drawn from a counter-based generator keyed by (seed,
/// voxel, atlas), so results do not depend on threading.
std::vector<ProbabilityVolume> oracle_error_probs(const LabelVolume &target_seg,
                                                  std::span<const LabelVolume> atlas_segs,
                                                  const OracleConfig &cfg, unsigned threads = 1);

// ---------------------------------------------------------------- significance

enum class Alternative
{
  TwoSided,
  Greater ///< sample_a tends to exceed sample_b
};

struct MannWhitneyResult
{
  double u = 0.0; ///< pairs with a > b, ties counted one half
  double p_value = 1.0;
};

/// Exact permutation p-value for fewer than 8 pooled values, otherwise the
/// tie-corrected normal approximation with continuity correction.
MannWhitneyResult mann_whitney_u(std::span<const double> sample_a, std::span<const double> sample_b,
                                 Alternative alternative = Alternative::TwoSided);

/// Step-up FDR control. Flags are returned in input order.
std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double fdr);

} // namespace fuselab

#endif
