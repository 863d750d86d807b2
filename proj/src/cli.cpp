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

#include "fuselab/cli.hpp"

#include "fuselab/analysis.hpp"
#include "fuselab/calibration.hpp"
#include "fuselab/fusion.hpp"
#include "fuselab/parallel.hpp"
#include "fuselab/probsource.hpp"
#include "fuselab/synth.hpp"
#include "fuselab/volume.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace fuselab::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char *kVersion = "0.1.0";

struct CommonOptions
{
  unsigned threads = 0;
  std::string report;
};

struct FuseOptions
{
  std::string target;
  std::vector<std::string> atlas_segs, atlas_imgs, prob_maps;
  std::string method;
  double beta = 1.0;
  std::size_t radius = 2;
  double pv_threshold = 0.5;
  double ridge = 1e-6;
  double jlf_fallback_threshold = 0.5;
  std::string platt_params, fallback;
  bool patch_search = false;
  std::size_t search_radius = 3, patch_radius = 2;
  std::string out;
};

struct CalibrateOptions
{
  std::vector<std::string> prob_maps, atlas_segs;
  std::string target_seg, mask, out_params;
};

struct OracleOptions
{
  std::string target_seg;
  std::vector<std::string> atlas_segs;
  std::string mode;
  double sigma = 0.2, p_correct = 0.4, p_incorrect = 0.6;
  std::uint64_t seed = 0;
  double pv_threshold = 0.5, ridge = 1e-6;
  std::string out_dir;
};

struct TScoreOptions
{
  std::string target_seg, target;
  std::vector<std::string> atlas_segs, prob_maps, atlas_imgs;
  double beta = 1.0;
  std::size_t radius = 2;
  bool patch_search = false;
  std::size_t search_radius = 3, patch_radius = 2;
  std::string out;
};

struct DiceOptions
{
  std::string seg_a, seg_b;
  std::vector<unsigned> labels;
  std::string out;
};

struct StatsOptions
{
  std::vector<std::string> dice_json;
  std::string reference;
  double fdr = 0.05;
  bool one_sided = false;
  std::string out;
};

struct SynthOptions
{
  std::vector<std::size_t> dims;
  std::uint32_t labels = 4, atlases = 5;
  double corruption = 0.2, noise = 1.0;
  double fallback_corruption = -1.0;
  std::uint64_t seed = 0;
  std::string out_dir;
};

struct ReplayOptions
{
  std::string record;
};

// A finished command: its effective parameters and the files it wrote.
struct Outcome
{
  Json params = Json::object();
  std::vector<std::string> outputs;
  fs::path default_report;
};

void require(bool ok, const std::string &message)
{
  if(!ok)
    throw ValidationError(message);
}

void write_json(const Json &j, const fs::path &path)
{
  std::ofstream out(path);
  if(!out)
    throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
  if(!out)
    throw IoError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path &path)
{
  std::ifstream in(path);
  if(!in)
    throw IoError("cannot open " + path.string());
  try
    {
    return nlohmann::json::parse(in);
    }
  catch(const nlohmann::json::exception &e)
    {
    throw ValidationError(path.string() + ": invalid JSON (" + e.what() + ")");
    }
}

template <class Kind> std::vector<Volume<Kind>> read_all(const std::vector<std::string> &paths)
{
  std::vector<Volume<Kind>> out;
  out.reserve(paths.size());
  for(const auto &p : paths)
    out.push_back(read_volume_as<Kind>(p));
  return out;
}

std::vector<LabelVolume> read_atlas_segs(const std::vector<std::string> &paths)
{
  auto segs = read_all<kind::Label>(paths);
  for(std::size_t i = 0; i < segs.size(); ++i)
    require_no_unassigned(segs[i], paths[i]);
  return segs;
}

void ensure_dir(const fs::path &dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if(ec || !fs::is_directory(dir))
    throw IoError("cannot create directory " + dir.string());
}

std::string indexed(const std::string &stem, std::size_t i)
{
  std::ostringstream s;
  s << stem << "_" << std::setw(2) << std::setfill('0') << i << ".maf";
  return s.str();
}

void require_paired(const std::vector<std::string> &segs, const std::vector<std::string> &other,
                    const std::string &flag)
{
  require(other.empty() || other.size() == segs.size(),
          flag + " must be given once per --atlas-seg (" + std::to_string(segs.size()) +
            " atlases, " + std::to_string(other.size()) + " " + flag + " values)");
}

// ---------------------------------------------------------------- fuse

Outcome do_fuse(const FuseOptions &o, unsigned threads)
{
  PipelineConfig cfg;
  require(o.method == "jlf" || o.method == "pv", "--method must be jlf or pv");
  cfg.fusion.method = o.method == "jlf" ? FusionMethod::JLF : FusionMethod::PV;
  cfg.fusion.pv_threshold = o.pv_threshold;
  cfg.fusion.ridge_alpha = o.ridge;
  cfg.fusion.jlf_fallback_threshold = o.jlf_fallback_threshold;
  cfg.fusion.validate();
  cfg.score = {o.beta, o.radius};
  cfg.score.validate();
  if(o.patch_search)
    cfg.patch_search = PatchSearchConfig{o.search_radius, o.patch_radius};
  cfg.threads = threads;

  require(!o.atlas_segs.empty(), "--atlas-seg is required");
  require_paired(o.atlas_segs, o.atlas_imgs, "--atlas-img");
  require_paired(o.atlas_segs, o.prob_maps, "--prob-map");
  require(cfg.fusion.method != FusionMethod::PV || !o.prob_maps.empty(),
          "--method pv requires --prob-map for every atlas (intensity scores cannot be thresholded)");
  require(!o.platt_params.empty() ? !o.prob_maps.empty() : true,
          "--platt-params requires --prob-map");
  require(!o.prob_maps.empty() || !o.atlas_imgs.empty(),
          "either --prob-map or --atlas-img must be given for every atlas");
  require(!o.patch_search || o.prob_maps.empty(),
          "--patch-search refines intensity scores and cannot be combined with --prob-map");

  const auto target = read_volume_as<kind::Intensity>(o.target);
  const auto segs = read_atlas_segs(o.atlas_segs);
  std::vector<AtlasPair> atlases;
  for(std::size_t i = 0; i < segs.size(); ++i)
    {
    std::optional<IntensityVolume> img;
    if(!o.atlas_imgs.empty())
      img = read_volume_as<kind::Intensity>(o.atlas_imgs[i]);
    atlases.push_back({std::move(img), segs[i]});
    }
  const auto probs = read_all<kind::Probability>(o.prob_maps);
  std::optional<PlattParams> platt;
  if(!o.platt_params.empty())
    platt = read_platt_params(o.platt_params);
  std::optional<LabelVolume> fallback;
  if(!o.fallback.empty())
    fallback = read_volume_as<kind::Label>(o.fallback);

  const auto fused = fuse_pipeline(target, atlases, probs, platt, fallback, cfg);
  write_volume(fused, o.out);

  Outcome r;
  r.params = {{"target", o.target},
              {"atlas_seg", o.atlas_segs},
              {"atlas_img", o.atlas_imgs},
              {"prob_map", o.prob_maps},
              {"method", o.method},
              {"beta", o.beta},
              {"radius", o.radius},
              {"pv_threshold", o.pv_threshold},
              {"ridge", o.ridge},
              {"jlf_fallback_threshold", o.jlf_fallback_threshold},
              {"platt_params", o.platt_params},
              {"fallback", o.fallback},
              {"patch_search", o.patch_search},
              {"search_radius", o.search_radius},
              {"patch_radius", o.patch_radius}};
  if(platt)
    r.params["platt"] = {{"a", platt->a}, {"b", platt->b}};
  r.outputs = {o.out};
  r.default_report = o.out + ".run.json";
  return r;
}

// ---------------------------------------------------------------- calibrate

Outcome do_calibrate(const CalibrateOptions &o)
{
  require(!o.prob_maps.empty(), "--prob-map is required");
  require(o.prob_maps.size() == o.atlas_segs.size(),
          "--prob-map and --atlas-seg must be given the same number of times");
  const auto probs = read_all<kind::Probability>(o.prob_maps);
  const auto segs = read_atlas_segs(o.atlas_segs);
  const auto target = read_volume_as<kind::Label>(o.target_seg);
  require_no_unassigned(target, o.target_seg);
  const auto mask = read_volume_as<kind::Mask>(o.mask);

  const auto samples = collect_samples(probs, segs, target, mask);
  const PlattParams p = platt_fit(samples);
  write_platt_params(p, o.out_params);

  Outcome r;
  r.params = {{"prob_map", o.prob_maps},
              {"atlas_seg", o.atlas_segs},
              {"target_seg", o.target_seg},
              {"mask", o.mask},
              {"samples", samples.size()},
              {"a", p.a},
              {"b", p.b},
              {"nll", platt_nll(samples, p)},
              {"nll_identity", platt_nll(samples, PlattParams{})}};
  r.outputs = {o.out_params};
  r.default_report = o.out_params + ".run.json";
  return r;
}

// ---------------------------------------------------------------- oracle

Outcome do_oracle(const OracleOptions &o, unsigned threads)
{
  OracleConfig cfg;
  require(o.mode == "g" || o.mode == "gs", "--mode must be g or gs");
  cfg.mode = o.mode == "g" ? OracleMode::G : OracleMode::GS;
  cfg.sigma = o.sigma;
  cfg.p_correct = o.p_correct;
  cfg.p_incorrect = o.p_incorrect;
  cfg.seed = o.seed;
  cfg.validate();
  FusionConfig fusion;
  fusion.pv_threshold = o.pv_threshold;
  fusion.ridge_alpha = o.ridge;
  fusion.validate();
  require(!o.atlas_segs.empty(), "--atlas-seg is required");

  const auto target = read_volume_as<kind::Label>(o.target_seg);
  require_no_unassigned(target, o.target_seg);
  const auto segs = read_atlas_segs(o.atlas_segs);
  const auto errors = oracle_error_probs(target, segs, cfg, threads);

  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  Outcome r;
  Json manifest;
  manifest["error_prob"] = Json::array();
  manifest["prob_map"] = Json::array();
  for(std::size_t i = 0; i < errors.size(); ++i)
    {
    const auto e = (dir / indexed("error_prob", i)).string();
    const auto p = (dir / indexed("prob_map", i)).string();
    write_volume(errors[i], e);
    write_volume(network_error_prob(errors[i]), p);
    manifest["error_prob"].push_back(e);
    manifest["prob_map"].push_back(p);
    r.outputs.push_back(e);
    r.outputs.push_back(p);
    }

  const std::vector<ErrorField> fields(errors.begin(), errors.end());
  const auto pv = plurality_vote(segs, errors, fusion.pv_threshold, threads);
  const auto jlf = jlf_fuse(segs, fields, fusion, threads);
  const auto pv_path = (dir / "fused_pv.maf").string();
  const auto jlf_path = (dir / "fused_jlf.maf").string();
  write_volume(pv, pv_path);
  write_volume(jlf, jlf_path);
  manifest["fused_pv"] = pv_path;
  manifest["fused_jlf"] = jlf_path;
  write_json(manifest, dir / "manifest.json");
  r.outputs.insert(r.outputs.end(), {pv_path, jlf_path, (dir / "manifest.json").string()});

  r.params = {{"target_seg", o.target_seg},
              {"atlas_seg", o.atlas_segs},
              {"mode", o.mode},
              {"sigma", o.sigma},
              {"p_correct", o.p_correct},
              {"p_incorrect", o.p_incorrect},
              {"seed", o.seed},
              {"pv_threshold", o.pv_threshold},
              {"ridge", o.ridge}};
  r.default_report = dir / "run.json";
  return r;
}

// ---------------------------------------------------------------- tscore

Outcome do_tscore(const TScoreOptions &o, unsigned threads)
{
  require(!o.atlas_segs.empty(), "--atlas-seg is required");
  require(o.prob_maps.empty() != o.atlas_imgs.empty(),
          "give exactly one of --prob-map or --atlas-img (with --target)");
  require_paired(o.atlas_segs, o.prob_maps, "--prob-map");
  require_paired(o.atlas_segs, o.atlas_imgs, "--atlas-img");
  require(o.atlas_imgs.empty() || !o.target.empty(), "--atlas-img requires --target");
  require(!o.patch_search || !o.atlas_imgs.empty(), "--patch-search requires --atlas-img");
  const IntensityScoreConfig score{o.beta, o.radius};
  score.validate();

  const auto target_seg = read_volume_as<kind::Label>(o.target_seg);
  require_no_unassigned(target_seg, o.target_seg);
  auto segs = read_atlas_segs(o.atlas_segs);

  TScoreVolume t(target_seg.dims(), 0.0f);
  if(!o.prob_maps.empty())
    {
    std::vector<ProbabilityVolume> errors;
    for(const auto &p : read_all<kind::Probability>(o.prob_maps))
      errors.push_back(network_error_prob(p));
    const std::vector<ErrorField> fields(errors.begin(), errors.end());
    t = tscore_map(target_seg, segs, fields, threads);
    }
  else
    {
    const auto target = read_volume_as<kind::Intensity>(o.target);
    std::vector<ScoreVolume> scores;
    for(std::size_t i = 0; i < segs.size(); ++i)
      {
      const auto img = read_volume_as<kind::Intensity>(o.atlas_imgs[i]);
      if(o.patch_search)
        {
        auto refined = patch_search_refine(target, img, segs[i], score,
                                           PatchSearchConfig{o.search_radius, o.patch_radius}, threads);
        segs[i] = std::move(refined.labels);
        scores.push_back(std::move(refined.scores));
        }
      else
        scores.push_back(intensity_error_score(target, img, score, threads));
      }
    const std::vector<ErrorField> fields(scores.begin(), scores.end());
    t = tscore_map(target_seg, segs, fields, threads);
    }
  write_volume(t, o.out);

  Outcome r;
  r.params = {{"target_seg", o.target_seg},
              {"target", o.target},
              {"atlas_seg", o.atlas_segs},
              {"prob_map", o.prob_maps},
              {"atlas_img", o.atlas_imgs},
              {"beta", o.beta},
              {"radius", o.radius},
              {"patch_search", o.patch_search},
              {"search_radius", o.search_radius},
              {"patch_radius", o.patch_radius}};
  r.outputs = {o.out};
  r.default_report = o.out + ".run.json";
  return r;
}

// ---------------------------------------------------------------- dice

Outcome do_dice(const DiceOptions &o, std::ostream &out)
{
  std::vector<std::uint16_t> labels;
  for(unsigned l : o.labels)
    {
    require(l < kUnassigned, "--labels: label id " + std::to_string(l) + " is out of range");
    labels.push_back(static_cast<std::uint16_t>(l));
    }
  const auto a = read_volume_as<kind::Label>(o.seg_a);
  const auto b = read_volume_as<kind::Label>(o.seg_b);
  require_same_dims(a.dims(), b.dims(), "dice");
  if(labels.empty())
    labels = present_labels(a, b);
  require(!labels.empty(), "no labels to evaluate: both segmentations are background only");

  const DiceReport report = dice(a, b, labels);
  write_json(to_json(report), o.out);
  out << "average dice " << std::setprecision(10) << report.average << "\n";

  Outcome r;
  r.params = {{"seg_a", o.seg_a}, {"seg_b", o.seg_b}, {"labels", labels}};
  r.outputs = {o.out};
  r.default_report = o.out + ".run.json";
  return r;
}

// ---------------------------------------------------------------- stats

// A dice file holds one report (sample = per-label values) or an array of
// reports (sample = their averages, one per subject).
std::vector<double> dice_sample(const fs::path &path)
{
  const auto j = read_json(path);
  std::vector<double> sample;
  try
    {
    if(j.is_array())
      for(const auto &item : j)
        sample.push_back(dice_report_from_json(item).average);
    else
      for(const auto &[label, d] : dice_report_from_json(j).per_label)
        sample.push_back(d);
    }
  catch(const ValidationError &e)
    {
    throw ValidationError(path.string() + ": " + e.what());
    }
  require(!sample.empty(), path.string() + ": no dice values");
  return sample;
}

Outcome do_stats(const StatsOptions &o, std::ostream &out)
{
  require(o.dice_json.size() >= 2, "--dice-json needs a reference and at least one other method");
  require(o.fdr > 0.0 && o.fdr < 1.0, "--fdr must lie in (0, 1)");

  std::vector<std::string> names;
  std::vector<std::vector<double>> samples;
  for(const auto &p : o.dice_json)
    {
    names.push_back(fs::path(p).stem().string());
    samples.push_back(dice_sample(p));
    }
  std::size_t ref = 0;
  if(!o.reference.empty())
    {
    const auto it = std::find(names.begin(), names.end(), o.reference);
    require(it != names.end(), "--reference " + o.reference + " does not name a --dice-json file");
    ref = std::size_t(it - names.begin());
    }

  const Alternative alt = o.one_sided ? Alternative::Greater : Alternative::TwoSided;
  std::vector<std::string> methods;
  std::vector<double> p_values;
  for(std::size_t i = 0; i < names.size(); ++i)
    {
    if(i == ref)
      continue;
    methods.push_back(names[i]);
    p_values.push_back(mann_whitney_u(samples[ref], samples[i], alt).p_value);
    }
  const auto rejected = benjamini_hochberg(p_values, o.fdr);

  Json report = Json::array();
  for(std::size_t k = 0; k < methods.size(); ++k)
    {
    report.push_back({{"method", methods[k]}, {"p_value", p_values[k]}, {"rejected", bool(rejected[k])}});
    out << methods[k] << " p=" << p_values[k] << (rejected[k] ? " significant" : "") << "\n";
    }
  write_json(report, o.out);

  Outcome r;
  r.params = {{"dice_json", o.dice_json},
              {"reference", names[ref]},
              {"fdr", o.fdr},
              {"one_sided", o.one_sided}};
  r.outputs = {o.out};
  r.default_report = o.out + ".run.json";
  return r;
}

// ---------------------------------------------------------------- synth

Outcome do_synth(const SynthOptions &o)
{
  require(o.dims.size() == 3, "--dims expects X,Y,Z");
  SynthSpec spec;
  spec.dims = {o.dims[0], o.dims[1], o.dims[2]};
  spec.n_labels = o.labels;
  spec.n_atlases = o.atlases;
  spec.corruption_rate = o.corruption;
  spec.intensity_noise_sigma = o.noise;
  spec.seed = o.seed;
  spec.validate();
  const double fallback_rate = o.fallback_corruption < 0.0 ? o.corruption : o.fallback_corruption;
  require(fallback_rate <= 1.0, "--fallback-corruption must lie in [0, 1]");

  const auto data = synth_dataset(spec);
  const auto fallback = synth_fallback(data.target_seg, spec.n_labels, fallback_rate, spec.seed);

  const fs::path dir(o.out_dir);
  ensure_dir(dir);
  Outcome r;
  Json manifest;
  const auto put = [&](const std::string &key, const std::string &file, const auto &volume) {
    const auto path = (dir / file).string();
    write_volume(volume, path);
    manifest[key] = path;
    r.outputs.push_back(path);
  };
  put("target_img", "target_img.maf", data.target_image);
  put("target_seg", "target_seg.maf", data.target_seg);
  put("fallback_seg", "fallback_seg.maf", fallback);
  manifest["atlas_img"] = Json::array();
  manifest["atlas_seg"] = Json::array();
  for(std::size_t i = 0; i < data.atlases.size(); ++i)
    {
    const auto img = (dir / indexed("atlas_img", i)).string();
    const auto seg = (dir / indexed("atlas_seg", i)).string();
    write_volume(*data.atlases[i].image, img);
    write_volume(data.atlases[i].segmentation, seg);
    manifest["atlas_img"].push_back(img);
    manifest["atlas_seg"].push_back(seg);
    r.outputs.push_back(img);
    r.outputs.push_back(seg);
    }
  write_json(manifest, dir / "manifest.json");
  r.outputs.push_back((dir / "manifest.json").string());

  r.params = {{"dims", o.dims},
              {"labels", o.labels},
              {"atlases", o.atlases},
              {"corruption", o.corruption},
              {"noise", o.noise},
              {"fallback_corruption", fallback_rate},
              {"seed", o.seed}};
  r.default_report = dir / "run.json";
  return r;
}

// ---------------------------------------------------------------- wiring

void add_common(CLI::App *cmd, CommonOptions &c)
{
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
  cmd->add_option("--report", c.report, "Reproducibility record (JSON)");
}

void add_patch_search(CLI::App *cmd, bool &flag, std::size_t &search, std::size_t &patch)
{
  cmd->add_flag("--patch-search", flag, "Refine with a local patch search");
  cmd->add_option("--search-radius", search, "Patch search displacement radius")->capture_default_str();
  cmd->add_option("--patch-radius", patch, "Patch similarity radius")->capture_default_str();
}

Json record_for(const std::string &command, const std::vector<std::string> &args, unsigned threads,
                const Outcome &outcome)
{
  Json rec;
  rec["tool"] = "fuselab";
  rec["version"] = kVersion;
  rec["command"] = command;
  rec["argv"] = args;
  rec["threads"] = threads;
  rec["params"] = outcome.params;
  rec["outputs"] = outcome.outputs;
  return rec;
}

int dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err, int depth)
{
  CLI::App app{"fuselab: multi-atlas label fusion and evaluation", "fuselab"};
  app.require_subcommand(1);

  CommonOptions common;
  FuseOptions fo;
  CalibrateOptions co;
  OracleOptions oo;
  TScoreOptions to;
  DiceOptions dop;
  StatsOptions so;
  SynthOptions sy;
  ReplayOptions ro;

  auto *fuse = app.add_subcommand("fuse", "Fuse warped atlas segmentations");
  fuse->add_option("--target", fo.target, "Target intensity image")->required();
  fuse->add_option("--atlas-seg", fo.atlas_segs, "Warped atlas segmentation (repeat per atlas)")->required();
  fuse->add_option("--atlas-img", fo.atlas_imgs, "Warped atlas image (repeat per atlas)");
  fuse->add_option("--prob-map", fo.prob_maps, "Network probability that the atlas label is correct");
  fuse->add_option("--method", fo.method, "jlf or pv")->required()->check(CLI::IsMember({"jlf", "pv"}));
  fuse->add_option("--beta", fo.beta, "Intensity score exponent")->capture_default_str();
  fuse->add_option("--radius", fo.radius, "Intensity score neighborhood radius")->capture_default_str();
  fuse->add_option("--pv-threshold", fo.pv_threshold, "Trust threshold for plurality voting")->capture_default_str();
  fuse->add_option("--ridge", fo.ridge, "Relative ridge on the dependency matrix")->capture_default_str();
  fuse->add_option("--jlf-fallback-threshold", fo.jlf_fallback_threshold,
                   "JLF uses the fallback where every atlas error exceeds this")->capture_default_str();
  fuse->add_option("--platt-params", fo.platt_params, "Platt parameter file");
  fuse->add_option("--fallback", fo.fallback, "Fallback segmentation");
  add_patch_search(fuse, fo.patch_search, fo.search_radius, fo.patch_radius);
  fuse->add_option("--out", fo.out, "Output segmentation")->required();
  add_common(fuse, common);

  auto *calibrate = app.add_subcommand("calibrate", "Fit Platt scaling parameters");
  calibrate->add_option("--prob-map", co.prob_maps, "Validation probability map (repeat)")->required();
  calibrate->add_option("--atlas-seg", co.atlas_segs, "Matching atlas segmentation (repeat)")->required();
  calibrate->add_option("--target-seg", co.target_seg, "Ground-truth segmentation")->required();
  calibrate->add_option("--mask", co.mask, "Voxels that enter the likelihood")->required();
  calibrate->add_option("--out-params", co.out_params, "Output parameter file")->required();
  add_common(calibrate, common);

  auto *oracle = app.add_subcommand("oracle", "Ground-truth driven probabilities and fusions");
  oracle->add_option("--target-seg", oo.target_seg, "Ground-truth segmentation")->required();
  oracle->add_option("--atlas-seg", oo.atlas_segs, "Warped atlas segmentation (repeat)")->required();
  oracle->add_option("--mode", oo.mode, "g or gs")->required()->check(CLI::IsMember({"g", "gs"}));
  oracle->add_option("--sigma", oo.sigma, "Noise standard deviation")->capture_default_str();
  oracle->add_option("--p-correct", oo.p_correct, "Error probability of correct atlases")->capture_default_str();
  oracle->add_option("--p-incorrect", oo.p_incorrect, "Error probability of incorrect atlases")->capture_default_str();
  oracle->add_option("--seed", oo.seed, "Random seed")->required();
  oracle->add_option("--pv-threshold", oo.pv_threshold, "Trust threshold for the PV fusion")->capture_default_str();
  oracle->add_option("--ridge", oo.ridge, "Relative ridge for the JLF fusion")->capture_default_str();
  oracle->add_option("--out-dir", oo.out_dir, "Output directory")->required();
  add_common(oracle, common);

  auto *tscore = app.add_subcommand("tscore", "Per-voxel one-sided t-score map");
  tscore->add_option("--target-seg", to.target_seg, "Ground-truth segmentation")->required();
  tscore->add_option("--target", to.target, "Target intensity image (with --atlas-img)");
  tscore->add_option("--atlas-seg", to.atlas_segs, "Warped atlas segmentation (repeat)")->required();
  tscore->add_option("--prob-map", to.prob_maps, "Network probability map (repeat)");
  tscore->add_option("--atlas-img", to.atlas_imgs, "Warped atlas image (repeat)");
  tscore->add_option("--beta", to.beta, "Intensity score exponent")->capture_default_str();
  tscore->add_option("--radius", to.radius, "Intensity score neighborhood radius")->capture_default_str();
  add_patch_search(tscore, to.patch_search, to.search_radius, to.patch_radius);
  tscore->add_option("--out", to.out, "Output t-score volume")->required();
  add_common(tscore, common);

  auto *dice_cmd = app.add_subcommand("dice", "Dice overlap per label");
  dice_cmd->add_option("--seg-a", dop.seg_a, "First segmentation")->required();
  dice_cmd->add_option("--seg-b", dop.seg_b, "Second segmentation")->required();
  dice_cmd->add_option("--labels", dop.labels, "Label ids to evaluate (default: all non-background)")
    ->delimiter(',');
  dice_cmd->add_option("--out", dop.out, "Output report (JSON)")->required();
  add_common(dice_cmd, common);

  auto *stats = app.add_subcommand("stats", "Mann-Whitney tests against a reference, BH-corrected");
  stats->add_option("--dice-json", so.dice_json, "Dice report(s) per method; first is the reference")->required();
  stats->add_option("--reference", so.reference, "Reference method (file stem)");
  stats->add_option("--fdr", so.fdr, "False discovery rate")->capture_default_str();
  stats->add_flag("--one-sided", so.one_sided, "Test that the reference scores higher");
  stats->add_option("--out", so.out, "Output significance report (JSON)")->required();
  add_common(stats, common);

  auto *synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--dims", sy.dims, "X,Y,Z")->required()->delimiter(',')->expected(3);
  synth->add_option("--labels", sy.labels, "Number of structures")->required();
  synth->add_option("--atlases", sy.atlases, "Number of atlases")->required();
  synth->add_option("--corruption", sy.corruption, "Per-voxel atlas relabel probability")->required();
  synth->add_option("--noise", sy.noise, "Intensity noise standard deviation")->required();
  synth->add_option("--fallback-corruption", sy.fallback_corruption,
                    "Relabel probability of the fallback segmentation (default: --corruption)");
  synth->add_option("--seed", sy.seed, "Random seed")->required();
  synth->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  add_common(synth, common);

  auto *replay = app.add_subcommand("replay", "Re-run the command recorded in a reproducibility record");
  replay->add_option("--record", ro.record, "Record written by an earlier run")->required();

  try
    {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    }
  catch(const CLI::CallForHelp &)
    {
    out << app.help();
    return kExitOk;
    }
  catch(const CLI::ParseError &e)
    {
    err << "fuselab: " << e.what() << "\n";
    return kExitValidation;
    }

  try
    {
    if(replay->parsed())
      {
      if(depth > 0)
        throw ValidationError("a replay record cannot itself be a replay");
      const auto rec = read_json(ro.record);
      std::vector<std::string> argv;
      try
        {
        argv = rec.at("argv").get<std::vector<std::string>>();
        }
      catch(const nlohmann::json::exception &e)
        {
        throw ValidationError(ro.record + ": record has no argv (" + e.what() + ")");
        }
      return dispatch(argv, out, err, depth + 1);
      }

    const unsigned threads = resolve_threads(common.threads);
    Outcome outcome;
    std::string command;
    if(fuse->parsed())
      command = "fuse", outcome = do_fuse(fo, threads);
    else if(calibrate->parsed())
      command = "calibrate", outcome = do_calibrate(co);
    else if(oracle->parsed())
      command = "oracle", outcome = do_oracle(oo, threads);
    else if(tscore->parsed())
      command = "tscore", outcome = do_tscore(to, threads);
    else if(dice_cmd->parsed())
      command = "dice", outcome = do_dice(dop, out);
    else if(stats->parsed())
      command = "stats", outcome = do_stats(so, out);
    else
      command = "synth", outcome = do_synth(sy);

    const fs::path report = common.report.empty() ? outcome.default_report : fs::path(common.report);
    write_json(record_for(command, args, threads, outcome), report);
    return kExitOk;
    }
  catch(const ValidationError &e)
    {
    err << "fuselab: " << e.what() << "\n";
    return kExitValidation;
    }
  catch(const IoError &e)
    {
    err << "fuselab: " << e.what() << "\n";
    return kExitValidation;
    }
  catch(const NumericalError &e)
    {
    err << "fuselab: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
    }
  catch(const std::exception &e)
    {
    err << "fuselab: internal error: " << e.what() << "\n";
    return kExitNumerical;
    }
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
  return dispatch(args, out, err, 0);
}

} // namespace fuselab::cli
