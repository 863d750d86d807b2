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

#include "fuselab/synth.hpp"

#include "fuselab/philox.hpp"

#include <cmath>
#include <limits>

namespace fuselab {

namespace {

enum Stream : std::uint32_t
{
  kSeedPositions = 1,
  kTargetNoise,
  kCorruptDecision,
  kCorruptLabel,
  kAtlasNoise,
  kFallbackDecision,
  kFallbackLabel,
};

std::uint16_t other_label(std::uint16_t current, std::uint64_t draw)
{
  auto l = static_cast<std::uint16_t>(1 + draw);
  if(l >= current)
    ++l;
  return l;
}

std::vector<std::uint16_t> corrupt(std::span<const std::uint16_t> labels, std::uint32_t n_labels,
                                   double rate, const CounterRng &decide, const CounterRng &pick,
                                   std::uint32_t lane)
{
  std::vector<std::uint16_t> out(labels.begin(), labels.end());
  if(rate <= 0.0)
    return out;
  for(std::size_t x = 0; x < out.size(); ++x)
    if(rate >= 1.0 || decide.uniform(x, lane) < rate)
      out[x] = other_label(out[x], pick.below(n_labels - 1, x, lane));
  return out;
}

std::vector<float> render(std::span<const std::uint16_t> labels, double sigma, const CounterRng &noise,
                          std::uint32_t lane)
{
  std::vector<float> out(labels.size());
  for(std::size_t x = 0; x < out.size(); ++x)
    {
    const double n = sigma > 0.0 ? sigma * noise.normal(x, lane) : 0.0;
    out[x] = static_cast<float>(label_intensity(labels[x]) + n);
    }
  return out;
}

} // namespace

void SynthSpec::validate() const
{
  dims.validate();
  if(n_labels == 0)
    throw ValidationError("synth: at least one label is required");
  if(n_labels >= kUnassigned)
    throw ValidationError("synth: " + std::to_string(n_labels) +
                          " labels exceed the 16-bit label capacity (max 65534)");
  if(n_atlases == 0)
    throw ValidationError("synth: at least one atlas is required");
  if(!(corruption_rate >= 0.0 && corruption_rate <= 1.0))
    throw ValidationError("synth: corruption rate must lie in [0, 1]");
  if(corruption_rate > 0.0 && n_labels < 2)
    throw ValidationError("synth: corruption needs at least two labels");
  if(!(intensity_noise_sigma >= 0.0) || !std::isfinite(intensity_noise_sigma))
    throw ValidationError("synth: noise sigma must be non-negative");
}

float label_intensity(std::uint16_t label) { return 10.0f * float(label); }

SynthDataset synth_dataset(const SynthSpec &spec)
{
  spec.validate();
  const Dims dims = spec.dims;
  const std::size_t count = dims.count();

  const CounterRng positions(spec.seed, kSeedPositions);
  std::vector<std::array<double, 3>> seeds(spec.n_labels);
  for(std::uint32_t k = 0; k < spec.n_labels; ++k)
    {
    const auto b = positions.block(k);
    seeds[k] = {double(b[0]) / 4294967296.0 * double(dims.nx),
                double(b[1]) / 4294967296.0 * double(dims.ny),
                double(b[2]) / 4294967296.0 * double(dims.nz)};
    }

  std::vector<std::uint16_t> labels(count);
  for(std::size_t x = 0; x < count; ++x)
    {
    const auto c = dims.coords(x);
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for(std::uint32_t k = 0; k < spec.n_labels; ++k)
      {
      const double dx = double(c[0]) + 0.5 - seeds[k][0];
      const double dy = double(c[1]) + 0.5 - seeds[k][1];
      const double dz = double(c[2]) + 0.5 - seeds[k][2];
      const double d = dx * dx + dy * dy + dz * dz;
      if(d < best)
        {
        best = d;
        arg = k;
        }
      }
    labels[x] = static_cast<std::uint16_t>(arg + 1);
    }

  const CounterRng target_noise(spec.seed, kTargetNoise);
  const CounterRng decide(spec.seed, kCorruptDecision);
  const CounterRng pick(spec.seed, kCorruptLabel);
  const CounterRng atlas_noise(spec.seed, kAtlasNoise);

  LabelVolume target_seg(dims, labels);
  IntensityVolume target_image(dims, render(labels, spec.intensity_noise_sigma, target_noise, 0));

  std::vector<AtlasPair> atlases;
  atlases.reserve(spec.n_atlases);
  for(std::uint32_t i = 0; i < spec.n_atlases; ++i)
    {
    auto seg = corrupt(labels, spec.n_labels, spec.corruption_rate, decide, pick, i);
    auto img = render(seg, spec.intensity_noise_sigma, atlas_noise, i);
    atlases.push_back({IntensityVolume(dims, std::move(img)), LabelVolume(dims, std::move(seg))});
    }
  return {std::move(target_image), std::move(target_seg), std::move(atlases)};
}

LabelVolume synth_fallback(const LabelVolume &target_seg, std::uint32_t n_labels, double corruption_rate,
                           std::uint64_t seed)
{
  if(!(corruption_rate >= 0.0 && corruption_rate <= 1.0))
    throw ValidationError("synth: fallback corruption rate must lie in [0, 1]");
  if(corruption_rate > 0.0 && n_labels < 2)
    throw ValidationError("synth: corruption needs at least two labels");
  const CounterRng decide(seed, kFallbackDecision);
  const CounterRng pick(seed, kFallbackLabel);
  return LabelVolume(target_seg.dims(),
                     corrupt(target_seg.data(), n_labels, corruption_rate, decide, pick, 0));
}

} // namespace fuselab
