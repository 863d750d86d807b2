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

#include "fuselab/fusion.hpp"

#include "fuselab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fuselab {

namespace {

constexpr double kResidualTolerance = 1e-8;

// LU with partial pivoting for the small symmetric systems of one voxel.
// Owns its scratch space; use one instance per thread.
class WeightSolver
{
public:
  explicit WeightSolver(std::size_t n)
    : n_(n), a_(n * n), lu_(n * n), v_(n), r_(n), perm_(n)
  {
  }

  bool solve(std::span<const double> m, double alpha, std::span<double> w)
  {
    const std::size_t n = n_;
    double maxabs = 0.0, norm_inf = 0.0;
    for(std::size_t i = 0; i < n; ++i)
      {
      double row = 0.0;
      for(std::size_t j = 0; j < n; ++j)
        {
        const double v = m[i * n + j] + (i == j ? alpha : 0.0);
        a_[i * n + j] = v;
        maxabs = std::max(maxabs, std::abs(v));
        row += std::abs(v);
        }
      norm_inf = std::max(norm_inf, row);
      }
    if(!std::isfinite(norm_inf) || maxabs == 0.0)
      return false;

    if(!factor(maxabs))
      return false;
    std::fill(v_.begin(), v_.end(), 1.0);
    substitute(v_);

    double rel = residual(norm_inf);
    if(rel > kResidualTolerance)
      {
      // one step of iterative refinement
      substitute(r_);
      for(std::size_t i = 0; i < n; ++i)
        v_[i] -= r_[i];
      rel = residual(norm_inf);
      if(rel > kResidualTolerance)
        return false;
      }

    double sum = 0.0, vmax = 0.0;
    for(std::size_t i = 0; i < n; ++i)
      {
      sum += v_[i];
      vmax = std::max(vmax, std::abs(v_[i]));
      }
    if(!std::isfinite(sum) || std::abs(sum) <= 1e-14 * vmax)
      return false;
    for(std::size_t i = 0; i < n; ++i)
      w[i] = v_[i] / sum;
    return true;
  }

private:
  bool factor(double maxabs)
  {
    const std::size_t n = n_;
    const double tol = double(n) * 4.0 * std::numeric_limits<double>::epsilon() * maxabs;
    std::copy(a_.begin(), a_.end(), lu_.begin());
    for(std::size_t i = 0; i < n; ++i)
      perm_[i] = i;
    for(std::size_t k = 0; k < n; ++k)
      {
      std::size_t p = k;
      for(std::size_t i = k + 1; i < n; ++i)
        if(std::abs(lu_[i * n + k]) > std::abs(lu_[p * n + k]))
          p = i;
      if(std::abs(lu_[p * n + k]) <= tol)
        return false;
      if(p != k)
        {
        for(std::size_t j = 0; j < n; ++j)
          std::swap(lu_[k * n + j], lu_[p * n + j]);
        std::swap(perm_[k], perm_[p]);
        }
      const double pivot = lu_[k * n + k];
      for(std::size_t i = k + 1; i < n; ++i)
        {
        const double l = lu_[i * n + k] / pivot;
        lu_[i * n + k] = l;
        for(std::size_t j = k + 1; j < n; ++j)
          lu_[i * n + j] -= l * lu_[k * n + j];
        }
      }
    return true;
  }

  // Solves A x = b in place.
  void substitute(std::vector<double> &b)
  {
    const std::size_t n = n_;
    std::vector<double> &x = scratch_;
    x.resize(n);
    for(std::size_t i = 0; i < n; ++i)
      x[i] = b[perm_[i]];
    for(std::size_t i = 0; i < n; ++i)
      for(std::size_t j = 0; j < i; ++j)
        x[i] -= lu_[i * n + j] * x[j];
    for(std::size_t i = n; i-- > 0;)
      {
      for(std::size_t j = i + 1; j < n; ++j)
        x[i] -= lu_[i * n + j] * x[j];
      x[i] /= lu_[i * n + i];
      }
    std::copy(x.begin(), x.end(), b.begin());
  }

  // r = A v - 1; returns |r|_inf / (|A|_inf |v|_inf).
  double residual(double norm_inf)
  {
    const std::size_t n = n_;
    double rmax = 0.0, vmax = 0.0;
    for(std::size_t i = 0; i < n; ++i)
      {
      double s = -1.0;
      for(std::size_t j = 0; j < n; ++j)
        s += a_[i * n + j] * v_[j];
      r_[i] = s;
      rmax = std::max(rmax, std::abs(s));
      vmax = std::max(vmax, std::abs(v_[i]));
      }
    if(!std::isfinite(rmax) || vmax == 0.0)
      return std::numeric_limits<double>::infinity();
    return rmax / (norm_inf * vmax);
  }

  std::size_t n_;
  std::vector<double> a_, lu_, v_, r_, scratch_;
  std::vector<std::size_t> perm_;
};

double relative_ridge(std::span<const double> m, std::size_t n, double ridge_alpha)
{
  if(ridge_alpha == 0.0)
    return 0.0;
  double trace = 0.0;
  for(std::size_t i = 0; i < n; ++i)
    trace += m[i * n + i];
  return std::max(ridge_alpha * trace / double(n), kRidgeFloor);
}

void check_inputs(std::span<const LabelVolume> segs, const Dims &dims, std::string_view what)
{
  for(std::size_t i = 0; i < segs.size(); ++i)
    {
    require_same_dims(dims, segs[i].dims(), std::string(what) + " atlas " + std::to_string(i));
    require_no_unassigned(segs[i], std::string(what) + " atlas " + std::to_string(i));
    }
}

// Label with the largest accumulated vote; ties go to the smallest id.
class VoteTally
{
public:
  void clear()
  {
    labels_.clear();
    votes_.clear();
  }

  void add(std::uint16_t label, double vote)
  {
    for(std::size_t k = 0; k < labels_.size(); ++k)
      if(labels_[k] == label)
        {
        votes_[k] += vote;
        return;
        }
    labels_.push_back(label);
    votes_.push_back(vote);
  }

  bool empty() const { return labels_.empty(); }

  std::uint16_t winner() const
  {
    std::size_t best = 0;
    for(std::size_t k = 1; k < labels_.size(); ++k)
      if(votes_[k] > votes_[best] || (votes_[k] == votes_[best] && labels_[k] < labels_[best]))
        best = k;
    return labels_[best];
  }

private:
  std::vector<std::uint16_t> labels_;
  std::vector<double> votes_;
};

} // namespace

DependencyMatrix::DependencyMatrix(std::size_t n, std::vector<double> entries)
  : n_(n), entries_(std::move(entries))
{
  if(n_ == 0)
    throw ValidationError("dependency matrix needs at least one atlas");
  if(entries_.size() != n_ * n_)
    throw ValidationError("dependency matrix: expected " + std::to_string(n_ * n_) + " entries");
  for(std::size_t i = 0; i < n_; ++i)
    for(std::size_t j = 0; j < n_; ++j)
      {
      const double v = entries_[i * n_ + j];
      if(!std::isfinite(v) || v < 0.0)
        throw ValidationError("dependency matrix entries must be finite and non-negative");
      if(v != entries_[j * n_ + i])
        throw ValidationError("dependency matrix must be symmetric");
      }
}

double DependencyMatrix::trace() const
{
  double t = 0.0;
  for(std::size_t i = 0; i < n_; ++i)
    t += entries_[i * n_ + i];
  return t;
}

double WeightVector::sum() const
{
  double s = 0.0;
  for(double w : weights)
    s += w;
  return s;
}

void FusionConfig::validate() const
{
  if(!(pv_threshold > 0.0 && pv_threshold < 1.0))
    throw ValidationError("pv threshold must lie in (0, 1)");
  if(!(jlf_fallback_threshold > 0.0 && jlf_fallback_threshold < 1.0))
    throw ValidationError("jlf fallback threshold must lie in (0, 1)");
  if(!(ridge_alpha >= 0.0) || !std::isfinite(ridge_alpha))
    throw ValidationError("ridge must be a non-negative finite number");
}

DependencyMatrix build_dependency_matrix(std::span<const double> error_values)
{
  const std::size_t n = error_values.size();
  for(double e : error_values)
    if(!std::isfinite(e) || e < 0.0)
      throw ValidationError("error values must be finite and non-negative");
  std::vector<double> m(n * n);
  for(std::size_t i = 0; i < n; ++i)
    for(std::size_t j = 0; j < n; ++j)
      m[i * n + j] = error_values[i] * error_values[j];
  return DependencyMatrix(n, std::move(m));
}

double effective_ridge(const DependencyMatrix &m, double ridge_alpha)
{
  return relative_ridge(m.entries(), m.size(), ridge_alpha);
}

WeightVector solve_weights(const DependencyMatrix &m, double ridge_alpha)
{
  if(!(ridge_alpha >= 0.0))
    throw ValidationError("ridge must be non-negative");
  WeightSolver solver(m.size());
  WeightVector out{std::vector<double>(m.size())};
  if(!solver.solve(m.entries(), ridge_alpha, out.weights))
    throw NumericalError("singular dependency matrix");
  return out;
}

LabelVolume jlf_fuse(std::span<const LabelVolume> atlas_segs, std::span<const ErrorField> error_volumes,
                     const FusionConfig &cfg, unsigned threads)
{
  cfg.validate();
  const std::size_t n = atlas_segs.size();
  if(n == 0)
    throw ValidationError("jlf_fuse needs at least one atlas");
  if(error_volumes.size() != n)
    throw ValidationError("jlf_fuse: " + std::to_string(n) + " atlases but " +
                          std::to_string(error_volumes.size()) + " error volumes");
  const Dims dims = atlas_segs[0].dims();
  check_inputs(atlas_segs, dims, "jlf_fuse");
  for(std::size_t i = 0; i < n; ++i)
    require_same_dims(dims, error_volumes[i].dims, "jlf_fuse error volume " + std::to_string(i));

  std::vector<std::uint16_t> out(dims.count());
  parallel_for(dims.count(), threads, [&](std::size_t begin, std::size_t end) {
    WeightSolver solver(n);
    std::vector<double> e(n), m(n * n), w(n);
    VoteTally tally;
    for(std::size_t x = begin; x < end; ++x)
      {
      for(std::size_t i = 0; i < n; ++i)
        e[i] = error_volumes[i].values[x];
      for(std::size_t i = 0; i < n; ++i)
        for(std::size_t j = 0; j < n; ++j)
          m[i * n + j] = e[i] * e[j];
      if(!solver.solve(m, relative_ridge(m, n, cfg.ridge_alpha), w))
        throw NumericalError("singular dependency matrix", dims.coords(x));
      tally.clear();
      for(std::size_t i = 0; i < n; ++i)
        tally.add(atlas_segs[i][x], w[i]);
      out[x] = tally.winner();
      }
  });
  return LabelVolume(dims, std::move(out));
}

LabelVolume plurality_vote(std::span<const LabelVolume> atlas_segs,
                           std::span<const ProbabilityVolume> error_volumes, double threshold,
                           unsigned threads)
{
  const std::size_t n = atlas_segs.size();
  if(n == 0)
    throw ValidationError("plurality_vote needs at least one atlas");
  if(error_volumes.size() != n)
    throw ValidationError("plurality_vote: " + std::to_string(n) + " atlases but " +
                          std::to_string(error_volumes.size()) + " error volumes");
  const Dims dims = atlas_segs[0].dims();
  check_inputs(atlas_segs, dims, "plurality_vote");
  for(std::size_t i = 0; i < n; ++i)
    require_same_dims(dims, error_volumes[i].dims(), "plurality_vote error volume " + std::to_string(i));

  std::vector<std::uint16_t> out(dims.count());
  parallel_for(dims.count(), threads, [&](std::size_t begin, std::size_t end) {
    VoteTally tally;
    for(std::size_t x = begin; x < end; ++x)
      {
      tally.clear();
      for(std::size_t i = 0; i < n; ++i)
        if(error_volumes[i][x] < threshold)
          tally.add(atlas_segs[i][x], 1.0);
      out[x] = tally.empty() ? kUnassigned : tally.winner();
      }
  });
  return LabelVolume(dims, std::move(out));
}

LabelVolume merge_fallback(const LabelVolume &fused, const LabelVolume &fallback)
{
  require_same_dims(fused.dims(), fallback.dims(), "merge_fallback");
  require_no_unassigned(fallback, "fallback segmentation");
  const auto f = fused.data();
  const auto g = fallback.data();
  std::vector<std::uint16_t> out(f.size());
  for(std::size_t i = 0; i < f.size(); ++i)
    out[i] = f[i] == kUnassigned ? g[i] : f[i];
  return LabelVolume(fused.dims(), std::move(out));
}

LabelVolume fuse_pipeline(const IntensityVolume &target, std::span<const AtlasPair> atlases,
                          std::span<const ProbabilityVolume> prob_maps,
                          const std::optional<PlattParams> &platt,
                          const std::optional<LabelVolume> &fallback, const PipelineConfig &cfg)
{
  cfg.fusion.validate();
  cfg.score.validate();
  const std::size_t n = atlases.size();
  if(n == 0)
    throw ValidationError("at least one atlas is required");
  const Dims dims = target.dims();
  const bool use_network = !prob_maps.empty();
  if(use_network && prob_maps.size() != n)
    throw ValidationError("expected one probability map per atlas (" + std::to_string(n) +
                          "), got " + std::to_string(prob_maps.size()));
  if(cfg.fusion.method == FusionMethod::PV && !use_network)
    throw ValidationError("plurality voting requires network probability maps; intensity error "
                          "scores are unbounded and cannot be thresholded");
  if(platt && !use_network)
    throw ValidationError("Platt calibration applies to probability maps, none were given");
  if(fallback)
    {
    require_same_dims(dims, fallback->dims(), "fallback segmentation");
    require_no_unassigned(*fallback, "fallback segmentation");
    }
  if(platt)
    platt->validate();

  std::vector<LabelVolume> segs;
  segs.reserve(n);
  for(std::size_t i = 0; i < n; ++i)
    {
    require_same_dims(dims, atlases[i].segmentation.dims(), "atlas segmentation " + std::to_string(i));
    segs.push_back(atlases[i].segmentation);
    }

  std::vector<ProbabilityVolume> probs;
  std::vector<ScoreVolume> scores;
  std::vector<ErrorField> errors;
  if(use_network)
    {
    probs.reserve(n);
    for(std::size_t i = 0; i < n; ++i)
      {
      require_same_dims(dims, prob_maps[i].dims(), "probability map " + std::to_string(i));
      probs.push_back(network_error_prob(platt ? platt_apply(prob_maps[i], *platt) : prob_maps[i]));
      }
    errors.assign(probs.begin(), probs.end());
    }
  else
    {
    scores.reserve(n);
    for(std::size_t i = 0; i < n; ++i)
      {
      if(!atlases[i].image)
        throw ValidationError("atlas " + std::to_string(i) +
                              " has no intensity image and no probability map was given");
      require_same_dims(dims, atlases[i].image->dims(), "atlas image " + std::to_string(i));
      if(cfg.patch_search)
        {
        auto refined = patch_search_refine(target, *atlases[i].image, segs[i], cfg.score,
                                           *cfg.patch_search, cfg.threads);
        segs[i] = std::move(refined.labels);
        scores.push_back(std::move(refined.scores));
        }
      else
        scores.push_back(intensity_error_score(target, *atlases[i].image, cfg.score, cfg.threads));
      }
    errors.assign(scores.begin(), scores.end());
    }

  if(cfg.fusion.method == FusionMethod::PV)
    {
    auto fused = plurality_vote(segs, probs, cfg.fusion.pv_threshold, cfg.threads);
    return fallback ? merge_fallback(fused, *fallback) : fused;
    }

  auto fused = jlf_fuse(segs, errors, cfg.fusion, cfg.threads);
  if(!fallback)
    return fused;
  const auto f = fused.data();
  std::vector<std::uint16_t> marked(f.begin(), f.end());
  for(std::size_t x = 0; x < marked.size(); ++x)
    {
    float lowest = std::numeric_limits<float>::infinity();
    for(const auto &e : errors)
      lowest = std::min(lowest, e.values[x]);
    if(lowest > cfg.fusion.jlf_fallback_threshold)
      marked[x] = kUnassigned;
    }
  return merge_fallback(LabelVolume(dims, std::move(marked)), *fallback);
}

} // namespace fuselab
