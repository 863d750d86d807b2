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

#include "fuselab/analysis.hpp"

#include "fuselab/parallel.hpp"
#include "fuselab/philox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fuselab {

namespace {

constexpr std::uint32_t kOracleStream = 0x0C1E;
constexpr std::uint32_t kSharedLane = 0xFFFFFFFFu;
constexpr std::size_t kExactLimit = 8;

void mean_var(std::span<const double> v, double &mean, double &var)
{
  mean = 0.0;
  for(double x : v)
    mean += x;
  mean /= double(v.size());
  var = 0.0;
  for(double x : v)
    var += (x - mean) * (x - mean);
  var = v.size() > 1 ? var / double(v.size() - 1) : 0.0;
}

double signed_sentinel(double diff)
{
  return diff > 0.0 ? kTScoreClamp : diff < 0.0 ? -kTScoreClamp : 0.0;
}

// Midranks (1-based) of the pooled sample and the tie-group sizes.
std::vector<double> midranks(const std::vector<double> &pooled, std::vector<std::size_t> &ties)
{
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> rank(n);
  ties.clear();
  for(std::size_t i = 0; i < n;)
    {
    std::size_t j = i;
    while(j + 1 < n && pooled[order[j + 1]] == pooled[order[i]])
      ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for(std::size_t k = i; k <= j; ++k)
      rank[order[k]] = r;
    ties.push_back(j - i + 1);
    i = j + 1;
    }
  return rank;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

} // namespace

DiceReport dice(const LabelVolume &seg_a, const LabelVolume &seg_b,
                std::span<const std::uint16_t> labels)
{
  require_same_dims(seg_a.dims(), seg_b.dims(), "dice");
  const std::set<std::uint16_t> wanted(labels.begin(), labels.end());
  if(wanted.empty())
    throw ValidationError("dice: no labels to evaluate");
  if(wanted.count(kUnassigned))
    throw ValidationError("dice: UNASSIGNED cannot be an evaluated label");

  std::map<std::uint16_t, std::size_t> count_a, count_b, overlap;
  const auto a = seg_a.data();
  const auto b = seg_b.data();
  for(std::size_t i = 0; i < a.size(); ++i)
    {
    if(wanted.count(a[i]))
      ++count_a[a[i]];
    if(wanted.count(b[i]))
      ++count_b[b[i]];
    if(a[i] == b[i] && wanted.count(a[i]))
      ++overlap[a[i]];
    }

  DiceReport report;
  double total = 0.0;
  for(std::uint16_t l : wanted)
    {
    const std::size_t denom = count_a[l] + count_b[l];
    const double d = denom == 0 ? 1.0 : 2.0 * double(overlap[l]) / double(denom);
    report.per_label[l] = d;
    total += d;
    }
  report.average = total / double(wanted.size());
  return report;
}

std::vector<std::uint16_t> present_labels(const LabelVolume &seg_a, const LabelVolume &seg_b)
{
  std::set<std::uint16_t> seen;
  for(auto v : seg_a.data())
    seen.insert(v);
  for(auto v : seg_b.data())
    seen.insert(v);
  seen.erase(0);
  seen.erase(kUnassigned);
  return {seen.begin(), seen.end()};
}

nlohmann::ordered_json to_json(const DiceReport &report)
{
  nlohmann::ordered_json j;
  j["per_label"] = nlohmann::ordered_json::object();
  for(const auto &[label, d] : report.per_label)
    j["per_label"][std::to_string(label)] = d;
  j["average"] = report.average;
  return j;
}

DiceReport dice_report_from_json(const nlohmann::json &j)
{
  DiceReport r;
  try
    {
    for(const auto &[key, value] : j.at("per_label").items())
      {
      const unsigned long id = std::stoul(key);
      if(id >= kUnassigned)
        throw ValidationError("dice report: label id out of range: " + key);
      r.per_label[static_cast<std::uint16_t>(id)] = value.get<double>();
      }
    r.average = j.at("average").get<double>();
    }
  catch(const nlohmann::json::exception &e)
    {
    throw ValidationError(std::string("malformed dice report (") + e.what() + ")");
    }
  catch(const std::logic_error &)
    {
    throw ValidationError("malformed dice report: non-numeric label id");
    }
  return r;
}

double one_sided_tscore(std::span<const double> incorrect, std::span<const double> correct)
{
  const std::size_t nw = incorrect.size(), nc = correct.size();
  if(nw == 0)
    return kTScoreClamp;
  if(nc == 0)
    return -kTScoreClamp;

  double mw, vw, mc, vc;
  mean_var(incorrect, mw, vw);
  mean_var(correct, mc, vc);
  const double diff = mw - mc;
  if(nw == 1 && nc == 1)
    return signed_sentinel(diff);
  if(nw == 1)
    return kTScoreClamp;
  if(nc == 1)
    return -kTScoreClamp;

  const double se2 = vw / double(nw) + vc / double(nc);
  if(se2 == 0.0)
    return signed_sentinel(diff);
  return std::clamp(diff / std::sqrt(se2), -kTScoreClamp, kTScoreClamp);
}

TScoreVolume tscore_map(const LabelVolume &target_seg, std::span<const LabelVolume> atlas_segs,
                        std::span<const ErrorField> error_volumes, unsigned threads)
{
  const std::size_t n = atlas_segs.size();
  if(n == 0)
    throw ValidationError("tscore_map needs at least one atlas");
  if(error_volumes.size() != n)
    throw ValidationError("tscore_map: expected one error volume per atlas");
  const Dims dims = target_seg.dims();
  for(std::size_t i = 0; i < n; ++i)
    {
    require_same_dims(dims, atlas_segs[i].dims(), "tscore_map atlas " + std::to_string(i));
    require_same_dims(dims, error_volumes[i].dims, "tscore_map error volume " + std::to_string(i));
    }

  std::vector<float> out(dims.count());
  parallel_for(dims.count(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> wrong, right;
    for(std::size_t x = begin; x < end; ++x)
      {
      wrong.clear();
      right.clear();
      for(std::size_t i = 0; i < n; ++i)
        (atlas_segs[i][x] == target_seg[x] ? right : wrong).push_back(error_volumes[i].values[x]);
      out[x] = static_cast<float>(one_sided_tscore(wrong, right));
      }
  });
  return TScoreVolume(dims, std::move(out));
}

void OracleConfig::validate() const
{
  if(!(sigma >= 0.0) || !std::isfinite(sigma))
    throw ValidationError("oracle sigma must be non-negative");
  if(!(p_correct >= 0.0 && p_correct < p_incorrect && p_incorrect <= 1.0))
    throw ValidationError("oracle probabilities must satisfy 0 <= p_correct < p_incorrect <= 1");
}

std::vector<ProbabilityVolume> oracle_error_probs(const LabelVolume &target_seg,
                                                  std::span<const LabelVolume> atlas_segs,
                                                  const OracleConfig &cfg, unsigned threads)
{
  cfg.validate();
  const Dims dims = target_seg.dims();
  const std::size_t n = atlas_segs.size();
  for(std::size_t i = 0; i < n; ++i)
    require_same_dims(dims, atlas_segs[i].dims(), "oracle atlas " + std::to_string(i));

  const CounterRng rng(cfg.seed, kOracleStream);
  std::vector<std::vector<float>> data(n, std::vector<float>(dims.count()));
  parallel_for(dims.count(), threads, [&](std::size_t begin, std::size_t end) {
    for(std::size_t x = begin; x < end; ++x)
      {
      const double shared = cfg.mode == OracleMode::GS ? rng.normal(x, kSharedLane) : 0.0;
      for(std::size_t i = 0; i < n; ++i)
        {
        const double base = atlas_segs[i][x] == target_seg[x] ? cfg.p_correct : cfg.p_incorrect;
        const double noise =
          cfg.mode == OracleMode::GS ? shared : rng.normal(x, static_cast<std::uint32_t>(i));
        data[i][x] = static_cast<float>(std::clamp(base + cfg.sigma * noise, 0.0, 1.0));
        }
      }
  });

  std::vector<ProbabilityVolume> out;
  out.reserve(n);
  for(auto &d : data)
    out.emplace_back(dims, std::move(d));
  return out;
}

MannWhitneyResult mann_whitney_u(std::span<const double> sample_a, std::span<const double> sample_b,
                                 Alternative alternative)
{
  const std::size_t na = sample_a.size(), nb = sample_b.size();
  if(na == 0 || nb == 0)
    throw ValidationError("mann_whitney_u: samples must be non-empty");
  std::vector<double> pooled(sample_a.begin(), sample_a.end());
  pooled.insert(pooled.end(), sample_b.begin(), sample_b.end());
  for(double v : pooled)
    if(!std::isfinite(v))
      throw ValidationError("mann_whitney_u: samples must be finite");

  std::vector<std::size_t> ties;
  const std::vector<double> rank = midranks(pooled, ties);
  const std::size_t n = na + nb;
  const double offset = double(na) * double(na + 1) / 2.0;
  double rank_a = 0.0;
  for(std::size_t i = 0; i < na; ++i)
    rank_a += rank[i];

  MannWhitneyResult result;
  result.u = rank_a - offset;
  const double mu = double(na) * double(nb) / 2.0;

  if(n < kExactLimit)
    {
    // every assignment of na of the pooled ranks to sample a
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + long(na), true);
    std::size_t total = 0, extreme = 0;
    const double observed = std::abs(result.u - mu);
    do
      {
      double u = -offset;
      for(std::size_t i = 0; i < n; ++i)
        if(pick[i])
          u += rank[i];
      ++total;
      const bool hit = alternative == Alternative::TwoSided ? std::abs(u - mu) >= observed - 1e-9
                                                            : u >= result.u - 1e-9;
      extreme += hit ? 1 : 0;
      }
    while(std::prev_permutation(pick.begin(), pick.end()));
    result.p_value = double(extreme) / double(total);
    return result;
    }

  double tie_term = 0.0;
  for(std::size_t t : ties)
    tie_term += double(t) * double(t) * double(t) - double(t);
  const double var = double(na) * double(nb) / 12.0 *
                     (double(n + 1) - tie_term / (double(n) * double(n - 1)));
  if(var <= 0.0)
    {
    result.p_value = 1.0;
    return result;
    }
  const double sd = std::sqrt(var);
  if(alternative == Alternative::TwoSided)
    {
    const double z = (std::abs(result.u - mu) - 0.5) / sd;
    result.p_value = std::min(1.0, 2.0 * normal_sf(z));
    }
  else
    result.p_value = normal_sf((result.u - mu - 0.5) / sd);
  return result;
}

std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double fdr)
{
  if(!(fdr > 0.0 && fdr < 1.0))
    throw ValidationError("fdr must lie in (0, 1)");
  for(double p : p_values)
    if(!(p >= 0.0 && p <= 1.0))
      throw ValidationError("p-values must lie in [0, 1]");

  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  std::size_t k = 0;
  for(std::size_t r = 1; r <= m; ++r)
    if(p_values[order[r - 1]] <= double(r) * fdr / double(m))
      k = r;
  std::vector<bool> reject(m, false);
  for(std::size_t r = 0; r < k; ++r)
    reject[order[r]] = true;
  return reject;
}

} // namespace fuselab
