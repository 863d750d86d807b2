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

#include "fuselab/volume.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fuselab {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'F', 'V'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPreamble = 12;

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v)
{
  for(int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t *p)
{
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

DType parse_dtype(const std::string &name, std::string_view source)
{
  if(name == "f32")
    return DType::F32;
  if(name == "u16")
    return DType::U16;
  if(name == "prob")
    return DType::Prob;
  if(name == "mask")
    return DType::Mask;
  throw ValidationError(std::string(source) + ": unsupported dtype \"" + name + "\"");
}

struct RawView
{
  Dims dims;
  DType dtype;
  std::span<const std::uint8_t> payload;
};

RawView decode_raw(std::span<const std::uint8_t> bytes, std::string_view source)
{
  const std::string src(source);
  if(bytes.size() < kPreamble || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ValidationError(src + ": bad magic, not a MAF volume");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if(version != kVersion)
    throw ValidationError(src + ": unsupported MAF version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes.data() + 8);
  if(header_len > bytes.size() - kPreamble)
    throw ValidationError(src + ": header length exceeds file size");

  const char *hp = reinterpret_cast<const char *>(bytes.data() + kPreamble);
  nlohmann::json header;
  try
    {
    header = nlohmann::json::parse(hp, hp + header_len);
    }
  catch(const nlohmann::json::exception &e)
    {
    throw ValidationError(src + ": malformed header JSON (" + e.what() + ")");
    }

  RawView raw{};
  try
    {
    const auto &dims = header.at("dims");
    if(!dims.is_array() || dims.size() != 3)
      throw ValidationError(src + ": \"dims\" must be an array of three integers");
    for(const auto &d : dims)
      if(!d.is_number_unsigned())
        throw ValidationError(src + ": \"dims\" entries must be positive integers");
    raw.dims = Dims{dims[0].get<std::size_t>(), dims[1].get<std::size_t>(),
                    dims[2].get<std::size_t>()};
    raw.dtype = parse_dtype(header.at("dtype").get<std::string>(), source);
    if(header.at("order").get<std::string>() != "x-fastest")
      throw ValidationError(src + ": unsupported voxel order");
    if(header.at("endian").get<std::string>() != "little")
      throw ValidationError(src + ": unsupported endianness");
    }
  catch(const nlohmann::json::exception &e)
    {
    throw ValidationError(src + ": invalid header (" + e.what() + ")");
    }
  raw.dims.validate();

  const std::size_t count = raw.dims.count();
  const std::size_t elem = dtype_size(raw.dtype);
  if(count > std::numeric_limits<std::size_t>::max() / elem)
    throw ValidationError(src + ": payload size overflows");
  const std::size_t expected = count * elem;
  const std::size_t actual = bytes.size() - kPreamble - header_len;
  if(actual != expected)
    throw ValidationError(src + ": payload length mismatch, expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual));
  raw.payload = bytes.subspan(kPreamble + header_len);
  return raw;
}

template <class Kind> Volume<Kind> build(const RawView &raw, std::string_view source)
{
  using T = typename Volume<Kind>::value_type;
  std::vector<T> data(raw.dims.count());
  std::memcpy(data.data(), raw.payload.data(), raw.payload.size());
  try
    {
    return Volume<Kind>(raw.dims, std::move(data));
    }
  catch(const ValidationError &e)
    {
    throw ValidationError(std::string(source) + ": " + e.what());
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if(!in)
    throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if(in.bad())
    throw IoError("failed reading " + path.string());
  return bytes;
}

bool compatible(DType file, DType wanted, bool score_like)
{
  if(file == wanted)
    return true;
  return score_like && file == DType::Prob;
}

} // namespace

void Dims::validate() const
{
  if(nx == 0 || ny == 0 || nz == 0)
    throw ValidationError("dims must be positive, got " + to_string(*this));
  const std::size_t max = std::numeric_limits<std::size_t>::max();
  if(ny > max / nx || nz > max / (nx * ny))
    throw ValidationError("voxel count overflows for dims " + to_string(*this));
}

std::string to_string(const Dims &dims)
{
  return std::to_string(dims.nx) + "x" + std::to_string(dims.ny) + "x" + std::to_string(dims.nz);
}

std::string_view dtype_name(DType dtype)
{
  switch(dtype)
    {
    case DType::F32: return "f32";
    case DType::U16: return "u16";
    case DType::Prob: return "prob";
    case DType::Mask: return "mask";
    }
  return "?";
}

std::size_t dtype_size(DType dtype)
{
  switch(dtype)
    {
    case DType::F32:
    case DType::Prob: return 4;
    case DType::U16: return 2;
    case DType::Mask: return 1;
    }
  return 0;
}

ScoreVolume to_score(const ProbabilityVolume &prob)
{
  const auto d = prob.data();
  return ScoreVolume(prob.dims(), std::vector<float>(d.begin(), d.end()));
}

void require_no_unassigned(const LabelVolume &seg, std::string_view what)
{
  const auto d = seg.data();
  for(std::size_t i = 0; i < d.size(); ++i)
    if(d[i] == kUnassigned)
      throw ValidationError(std::string(what) + " contains the reserved UNASSIGNED label at index " +
                            std::to_string(i));
}

void require_same_dims(const Dims &a, const Dims &b, std::string_view what)
{
  if(a != b)
    throw ValidationError(std::string(what) + ": dims mismatch (" + to_string(a) + " vs " +
                          to_string(b) + ")");
}

std::string maf_header(const Dims &dims, DType dtype)
{
  nlohmann::ordered_json header;
  header["dims"] = {dims.nx, dims.ny, dims.nz};
  header["dtype"] = dtype_name(dtype);
  header["order"] = "x-fastest";
  header["endian"] = "little";
  return header.dump();
}

template <class Kind> std::vector<std::uint8_t> encode_volume(const Volume<Kind> &volume)
{
  volume.dims().validate();
  const DType dtype = VolumeTraits<Kind>::dtype;
  const std::string header = maf_header(volume.dims(), dtype);
  const auto data = volume.data();
  const std::size_t payload = data.size() * sizeof(typename Volume<Kind>::value_type);

  std::vector<std::uint8_t> out;
  out.reserve(kPreamble + header.size() + payload);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  const auto *p = reinterpret_cast<const std::uint8_t *>(data.data());
  out.insert(out.end(), p, p + payload);
  return out;
}

AnyVolume decode_volume(std::span<const std::uint8_t> bytes, std::string_view source)
{
  const RawView raw = decode_raw(bytes, source);
  switch(raw.dtype)
    {
    case DType::F32: return build<kind::Intensity>(raw, source);
    case DType::U16: return build<kind::Label>(raw, source);
    case DType::Prob: return build<kind::Probability>(raw, source);
    case DType::Mask: return build<kind::Mask>(raw, source);
    }
  throw ValidationError(std::string(source) + ": unsupported dtype");
}

AnyVolume read_volume(const std::filesystem::path &path)
{
  const auto bytes = read_file(path);
  return decode_volume(bytes, path.string());
}

template <class Kind> void write_volume(const Volume<Kind> &volume, const std::filesystem::path &path)
{
  const auto bytes = encode_volume(volume);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if(!out)
    throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if(!out)
    throw IoError("failed writing " + path.string());
}

template <class Kind> Volume<Kind> read_volume_as(const std::filesystem::path &path)
{
  const auto bytes = read_file(path);
  const std::string source = path.string();
  const RawView raw = decode_raw(bytes, source);
  constexpr bool score_like = std::is_same_v<Kind, kind::Score>;
  if(!compatible(raw.dtype, VolumeTraits<Kind>::dtype, score_like))
    throw ValidationError(source + ": expected a " + std::string(VolumeTraits<Kind>::name) +
                          " volume, file has dtype " + std::string(dtype_name(raw.dtype)));
  return build<Kind>(raw, source);
}

#define FUSELAB_INSTANTIATE(K)                                                                   \
  template std::vector<std::uint8_t> encode_volume(const Volume<K> &);                           \
  template void write_volume(const Volume<K> &, const std::filesystem::path &);                  \
  template Volume<K> read_volume_as<K>(const std::filesystem::path &);

FUSELAB_INSTANTIATE(kind::Intensity)
FUSELAB_INSTANTIATE(kind::Label)
FUSELAB_INSTANTIATE(kind::Probability)
FUSELAB_INSTANTIATE(kind::Score)
FUSELAB_INSTANTIATE(kind::Mask)
FUSELAB_INSTANTIATE(kind::TScore)

#undef FUSELAB_INSTANTIATE

} // namespace fuselab
