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

#ifndef FUSELAB_ERROR_HPP
#define FUSELAB_ERROR_HPP

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace fuselab {

/// Bad input: malformed file, inconsistent shapes, out-of-range parameter.
class ValidationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine failed, e.g. a singular system at some voxel.
class NumericalError : public std::runtime_error
{
public:
  explicit NumericalError(const std::string &what)
    : std::runtime_error(what)
  {
  }

  NumericalError(const std::string &what, std::array<std::size_t, 3> voxel)
    : std::runtime_error(what + " at voxel (" + std::to_string(voxel[0]) + ", " +
                         std::to_string(voxel[1]) + ", " + std::to_string(voxel[2]) + ")"),
      voxel_(voxel), has_voxel_(true)
  {
  }

  bool has_voxel() const { return has_voxel_; }
  std::array<std::size_t, 3> voxel() const { return voxel_; }

private:
  std::array<std::size_t, 3> voxel_{};
  bool has_voxel_ = false;
};

} // namespace fuselab

#endif
