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

#include "fuselab/calibration.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fuselab {

namespace {

// -log sigmoid(t) without overflow
double softplus_neg(double t)
{
  return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

struct Derivatives
{
  double g_a = 0.0, g_b = 0.0;
  double h_aa = 0.0, h_ab = 0.0, h_bb = 0.0;
};

Derivatives derivatives(std::span<const CalibrationSample> samples, const PlattParams &p)
{
  Derivatives d;
  for(const auto &s : samples)
    {
    const double q = sigmoid(p.a * s.logit + p.b);
    const double r = q - (s.correct ? 1.0 : 0.0);
    const double w = q * (1.0 - q);
    d.g_a += r * s.logit;
    d.g_b += r;
    d.h_aa += w * s.logit * s.logit;
    d.h_ab += w * s.logit;
    d.h_bb += w;
    }
  return d;
}

} // namespace

void PlattParams::validate() const
{
  if(!std::isfinite(a) || !std::isfinite(b))
    throw ValidationError("Platt parameters must be finite");
}

double sigmoid(double t)
{
  if(t >= 0.0)
    return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double prob_to_logit(double p, double epsilon)
{
  const double q = std::clamp(p, epsilon, 1.0 - epsilon);
  return std::log(q / (1.0 - q));
}

double platt_nll(std::span<const CalibrationSample> samples, const PlattParams &params)
{
  double nll = 0.0;
  for(const auto &s : samples)
    {
    const double t = params.a * s.logit + params.b;
    nll += s.correct ? softplus_neg(t) : softplus_neg(-t);
    }
  return nll;
}

PlattParams platt_fit(std::span<const CalibrationSample> samples)
{
  std::size_t positives = 0;
  for(const auto &s : samples)
    {
    if(!std::isfinite(s.logit))
      throw ValidationError("calibration logits must be finite");
    positives += s.correct ? 1 : 0;
    }
  if(positives == 0 || positives == samples.size())
    throw ValidationError("Platt fit needs both correct and incorrect samples");

  PlattParams p{1.0, 0.0};
  double nll = platt_nll(samples, p);
  for(int iter = 0; iter < 200; ++iter)
    {
    const Derivatives d = derivatives(samples, p);
    // Newton direction on the 2x2 Hessian, lightly damped so a degenerate
    // logit spread still yields a descent direction.
    const double damp = 1e-12 * (d.h_aa + d.h_bb) + 1e-300;
    const double haa = d.h_aa + damp, hbb = d.h_bb + damp, hab = d.h_ab;
    const double det = haa * hbb - hab * hab;
    double step_a, step_b;
    if(det > 0.0 && std::isfinite(det))
      {
      step_a = -(hbb * d.g_a - hab * d.g_b) / det;
      step_b = -(haa * d.g_b - hab * d.g_a) / det;
      }
    else
      {
      step_a = -d.g_a;
      step_b = -d.g_b;
      }
    const double slope = d.g_a * step_a + d.g_b * step_b;
    if(!(slope < 0.0))
      break;

    double t = 1.0;
    PlattParams next = p;
    double next_nll = nll;
    bool accepted = false;
    for(int halving = 0; halving < 60; ++halving, t *= 0.5)
      {
      next = {p.a + t * step_a, p.b + t * step_b};
      next_nll = platt_nll(samples, next);
      if(next_nll <= nll + 1e-4 * t * slope)
        {
        accepted = true;
        break;
        }
      }
    if(!accepted || next_nll >= nll)
      break;
    const double change = std::max(std::abs(next.a - p.a), std::abs(next.b - p.b));
    p = next;
    nll = next_nll;
    if(change < 1e-13 * (1.0 + std::abs(p.a) + std::abs(p.b)))
      break;
    }
  return p;
}

ProbabilityVolume platt_apply(const ProbabilityVolume &prob_map, const PlattParams &params,
                              double epsilon)
{
  params.validate();
  const auto in = prob_map.data();
  std::vector<float> out(in.size());
  for(std::size_t i = 0; i < in.size(); ++i)
    {
    const double q = sigmoid(params.a * prob_to_logit(in[i], epsilon) + params.b);
    out[i] = std::clamp(static_cast<float>(q), 0.0f, 1.0f);
    }
  return ProbabilityVolume(prob_map.dims(), std::move(out));
}

std::vector<CalibrationSample> collect_samples(std::span<const ProbabilityVolume> prob_maps,
                                               std::span<const LabelVolume> atlas_segs,
                                               const LabelVolume &target_seg,
                                               const MaskVolume &mask)
{
  if(prob_maps.size() != atlas_segs.size())
    throw ValidationError("expected one probability map per atlas segmentation");
  const Dims dims = target_seg.dims();
  require_same_dims(dims, mask.dims(), "calibration mask");
  for(std::size_t i = 0; i < prob_maps.size(); ++i)
    {
    require_same_dims(dims, prob_maps[i].dims(), "probability map " + std::to_string(i));
    require_same_dims(dims, atlas_segs[i].dims(), "atlas segmentation " + std::to_string(i));
    }

  std::vector<CalibrationSample> samples;
  for(std::size_t i = 0; i < prob_maps.size(); ++i)
    for(std::size_t x = 0; x < dims.count(); ++x)
      if(mask[x])
        samples.push_back({prob_to_logit(prob_maps[i][x]), atlas_segs[i][x] == target_seg[x]});
  return samples;
}

void write_platt_params(const PlattParams &params, const std::filesystem::path &path)
{
  nlohmann::ordered_json j;
  j["a"] = params.a;
  j["b"] = params.b;
  std::ofstream out(path);
  if(!out)
    throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if(!out)
    throw IoError("failed writing " + path.string());
}

PlattParams read_platt_params(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if(!in)
    throw IoError("cannot open " + path.string());
  PlattParams p;
  try
    {
    const auto j = nlohmann::json::parse(in);
    p.a = j.at("a").get<double>();
    p.b = j.at("b").get<double>();
    }
  catch(const nlohmann::json::exception &e)
    {
    throw ValidationError(path.string() + ": invalid Platt parameter file (" + e.what() + ")");
    }
  p.validate();
  return p;
}

} // namespace fuselab
