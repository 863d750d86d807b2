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

#ifndef FUSELAB_VOLUME_HPP
#define FUSELAB_VOLUME_HPP

#include "fuselab/error.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace fuselab {

/// Voxel counts per axis. Linear index of (x, y, z) is x + nx * (y + ny * z).
struct Dims
{
  std::size_t nx = 1;
  std::size_t ny = 1;
  std::size_t nz = 1;

  std::size_t count() const { return nx * ny * nz; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const
  {
    return x + nx * (y + ny * z);
  }

  std::array<std::size_t, 3> coords(std::size_t i) const
  {
    return {i % nx, (i / nx) % ny, i / (nx * ny)};
  }

  /// Throws ValidationError for a zero extent or an unaddressable voxel count.
  void validate() const;

  bool operator==(const Dims &) const = default;
};

std::string to_string(const Dims &dims);

/// On-disk element type tag of a MAF file.
enum class DType
{
  F32,
  U16,
  Prob,
  Mask
};

std::string_view dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

/// Label id reserved for "no atlas trusted"; never valid in atlas or ground-truth inputs.
inline constexpr std::uint16_t kUnassigned = 65535;

namespace kind {
struct Intensity;
struct Label;
struct Probability;
struct Score;
struct Mask;
struct TScore;
} // namespace kind

template <class Kind> struct VolumeTraits;

template <> struct VolumeTraits<kind::Intensity>
{
  using value_type = float;
  static constexpr DType dtype = DType::F32;
  static constexpr std::string_view name = "intensity";
  static bool valid(float v) { return std::isfinite(v); }
};

template <> struct VolumeTraits<kind::Label>
{
  using value_type = std::uint16_t;
  static constexpr DType dtype = DType::U16;
  static constexpr std::string_view name = "label";
  static bool valid(std::uint16_t) { return true; }
};

template <> struct VolumeTraits<kind::Probability>
{
  using value_type = float;
  static constexpr DType dtype = DType::Prob;
  static constexpr std::string_view name = "probability";
  static bool valid(float v) { return v >= 0.0f && v <= 1.0f; }
};

template <> struct VolumeTraits<kind::Score>
{
  using value_type = float;
  static constexpr DType dtype = DType::F32;
  static constexpr std::string_view name = "score";
  static bool valid(float v) { return std::isfinite(v) && v >= 0.0f; }
};

template <> struct VolumeTraits<kind::Mask>
{
  using value_type = std::uint8_t;
  static constexpr DType dtype = DType::Mask;
  static constexpr std::string_view name = "mask";
  static bool valid(std::uint8_t v) { return v <= 1; }
};

template <> struct VolumeTraits<kind::TScore>
{
  using value_type = float;
  static constexpr DType dtype = DType::F32;
  static constexpr std::string_view name = "t-score";
  static bool valid(float v) { return v >= -1000.0f && v <= 1000.0f; }
};

/// Immutable 3D grid. The value invariant of Kind is checked on construction.
template <class Kind> class Volume
{
public:
  using traits = VolumeTraits<Kind>;
  using value_type = typename traits::value_type;

  Volume(Dims dims, std::vector<value_type> data)
    : dims_(dims), data_(std::move(data))
  {
    dims_.validate();
    if(data_.size() != dims_.count())
      throw ValidationError(std::string(traits::name) + " volume: data length " +
                            std::to_string(data_.size()) + " does not match dims " +
                            to_string(dims_));
    for(std::size_t i = 0; i < data_.size(); ++i)
      if(!traits::valid(data_[i]))
        throw ValidationError(std::string(traits::name) + " volume: invalid value at index " +
                              std::to_string(i));
  }

  Volume(Dims dims, value_type fill)
    : Volume(dims, std::vector<value_type>(dims.nx * dims.ny * dims.nz, fill))
  {
  }

  const Dims &dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  std::span<const value_type> data() const { return data_; }

  value_type operator[](std::size_t i) const { return data_[i]; }
  value_type at(std::size_t x, std::size_t y, std::size_t z) const
  {
    return data_[dims_.index(x, y, z)];
  }

  bool operator==(const Volume &) const = default;

private:
  Dims dims_;
  std::vector<value_type> data_;
};

using IntensityVolume = Volume<kind::Intensity>;
using LabelVolume = Volume<kind::Label>;
using ProbabilityVolume = Volume<kind::Probability>;
using ScoreVolume = Volume<kind::Score>;
using MaskVolume = Volume<kind::Mask>;
using TScoreVolume = Volume<kind::TScore>;

/// What read_volume returns: the variant is selected by the header dtype.
using AnyVolume = std::variant<IntensityVolume, LabelVolume, ProbabilityVolume, MaskVolume>;

/// Per-voxel error values of one atlas, borrowed from a score or probability volume.
struct ErrorField
{
  Dims dims;
  std::span<const float> values;

  ErrorField(const ScoreVolume &v) : dims(v.dims()), values(v.data()) {}
  ErrorField(const ProbabilityVolume &v) : dims(v.dims()), values(v.data()) {}
};

/// An atlas warped into target space. The image may be absent when only
/// network probability maps drive the fusion.
struct AtlasPair
{
  std::optional<IntensityVolume> image;
  LabelVolume segmentation;
};

ScoreVolume to_score(const ProbabilityVolume &prob);

/// Rejects the UNASSIGNED sentinel; `what` names the input in the message.
void require_no_unassigned(const LabelVolume &seg, std::string_view what);

/// Throws ValidationError unless `b` has the same dims as `a`.
void require_same_dims(const Dims &a, const Dims &b, std::string_view what);

// MAF container: "MAFV", u32 version, u32 header length, JSON header, raw payload.

template <class Kind> std::vector<std::uint8_t> encode_volume(const Volume<Kind> &volume);
AnyVolume decode_volume(std::span<const std::uint8_t> bytes, std::string_view source = "<buffer>");

AnyVolume read_volume(const std::filesystem::path &path);

/// The canonical JSON header emitted for a volume of the given shape and dtype.
std::string maf_header(const Dims &dims, DType dtype);

template <class Kind> void write_volume(const Volume<Kind> &volume, const std::filesystem::path &path);

/// Reads a file and checks that its dtype can hold a volume of the requested kind.
/// f32 files serve intensity, score and t-score volumes; prob files also serve scores.
template <class Kind> Volume<Kind> read_volume_as(const std::filesystem::path &path);

} // namespace fuselab

#endif
