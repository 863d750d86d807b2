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

#include "fuselab/probsource.hpp"

#include "fuselab/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace fuselab {

namespace {

// Clipped separable box sum. Each output is a fixed-order sum of
// non-negative terms, so results do not depend on the thread count.
class BoxSum
{
public:
  BoxSum(Dims dims, std::size_t radius, unsigned threads)
    : dims_(dims), radius_(radius), threads_(threads), tmp_(dims.count())
  {
  }

  void operator()(const std::vector<double> &in, std::vector<double> &out)
  {
    out.resize(in.size());
    pass(in, out, 0);
    pass(out, tmp_, 1);
    pass(tmp_, out, 2);
  }

private:
  void pass(const std::vector<double> &in, std::vector<double> &out, int axis) const
  {
    const std::array<std::size_t, 3> extent = {dims_.nx, dims_.ny, dims_.nz};
    const std::array<std::size_t, 3> stride = {1, dims_.nx, dims_.nx * dims_.ny};
    const std::size_t len = extent[axis];
    const std::size_t step = stride[axis];
    const std::size_t r = radius_;
    parallel_for(in.size(), threads_, [&](std::size_t begin, std::size_t end) {
      for(std::size_t i = begin; i < end; ++i)
        {
        const std::size_t c = (i / step) % len;
        const std::size_t lo = c > r ? c - r : 0;
        const std::size_t hi = std::min(len - 1, c + r);
        const std::size_t base = i - c * step;
        double s = 0.0;
        for(std::size_t k = lo; k <= hi; ++k)
          s += in[base + k * step];
        out[i] = s;
        }
    });
  }

  Dims dims_;
  std::size_t radius_;
  unsigned threads_;
  std::vector<double> tmp_;
};

float raise(double sum, double beta)
{
  return static_cast<float>(beta == 1.0 ? sum : std::pow(sum, beta));
}

ScoreVolume to_score_volume(const Dims &dims, const std::vector<double> &sums, double beta)
{
  std::vector<float> out(sums.size());
  for(std::size_t i = 0; i < sums.size(); ++i)
    out[i] = raise(sums[i], beta);
  return ScoreVolume(dims, std::move(out));
}

} // namespace

void IntensityScoreConfig::validate() const
{
  if(!(beta > 0.0) || !std::isfinite(beta))
    throw ValidationError("beta must be a positive finite number");
}

ScoreVolume intensity_error_score(const IntensityVolume &target, const IntensityVolume &atlas,
                                  const IntensityScoreConfig &cfg, unsigned threads)
{
  cfg.validate();
  require_same_dims(target.dims(), atlas.dims(), "intensity_error_score");
  const auto t = target.data();
  const auto a = atlas.data();
  std::vector<double> sq(t.size());
  for(std::size_t i = 0; i < sq.size(); ++i)
    {
    const double d = double(t[i]) - double(a[i]);
    sq[i] = d * d;
    }
  std::vector<double> sums;
  BoxSum(target.dims(), cfg.radius, threads)(sq, sums);
  return to_score_volume(target.dims(), sums, cfg.beta);
}

ProbabilityVolume network_error_prob(const ProbabilityVolume &prob_map)
{
  const auto p = prob_map.data();
  std::vector<float> out(p.size());
  for(std::size_t i = 0; i < p.size(); ++i)
    out[i] = 1.0f - p[i];
  return ProbabilityVolume(prob_map.dims(), std::move(out));
}

RefinedAtlas patch_search_refine(const IntensityVolume &target, const IntensityVolume &atlas_img,
                                 const LabelVolume &atlas_seg, const IntensityScoreConfig &score_cfg,
                                 const PatchSearchConfig &search_cfg, unsigned threads)
{
  score_cfg.validate();
  const Dims dims = target.dims();
  require_same_dims(dims, atlas_img.dims(), "patch_search_refine atlas image");
  require_same_dims(dims, atlas_seg.dims(), "patch_search_refine atlas segmentation");

  const auto t = target.data();
  const auto a = atlas_img.data();
  const auto seg = atlas_seg.data();
  const auto rs = static_cast<long>(search_cfg.search_radius);
  const std::size_t n = dims.count();

  std::vector<std::array<long, 3>> displacements{{0, 0, 0}};
  for(long dz = -rs; dz <= rs; ++dz)
    for(long dy = -rs; dy <= rs; ++dy)
      for(long dx = -rs; dx <= rs; ++dx)
        if(dx != 0 || dy != 0 || dz != 0)
          displacements.push_back({dx, dy, dz});

  const long nx = static_cast<long>(dims.nx);
  const long ny = static_cast<long>(dims.ny);
  const long nz = static_cast<long>(dims.nz);
  auto inside = [&](long x, long y, long z) {
    return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
  };

  BoxSum box(dims, search_cfg.patch_radius, threads);
  std::vector<double> sq(n), sums;
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::uint16_t> labels(seg.begin(), seg.end());

  for(const auto &d : displacements)
    {
    const long shift = d[0] + nx * (d[1] + ny * d[2]);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
      for(std::size_t i = begin; i < end; ++i)
        {
        const auto c = dims.coords(i);
        const long x = long(c[0]) + d[0], y = long(c[1]) + d[1], z = long(c[2]) + d[2];
        if(inside(x, y, z))
          {
          const double diff = double(t[i]) - double(a[long(i) + shift]);
          sq[i] = diff * diff;
          }
        else
          sq[i] = 0.0;
        }
    });
    box(sq, sums);
    parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
      for(std::size_t i = begin; i < end; ++i)
        {
        const auto c = dims.coords(i);
        if(!inside(long(c[0]) + d[0], long(c[1]) + d[1], long(c[2]) + d[2]))
          continue;
        if(sums[i] < best[i])
          {
          best[i] = sums[i];
          labels[i] = seg[long(i) + shift];
          }
        }
    });
    }

  return {LabelVolume(dims, std::move(labels)), to_score_volume(dims, best, score_cfg.beta)};
}

} // namespace fuselab
