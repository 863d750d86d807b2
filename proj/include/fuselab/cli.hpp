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

#ifndef FUSELAB_CLI_HPP
#define FUSELAB_CLI_HPP

#include <iostream>
#include <string>
#include <vector>

namespace fuselab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Entry point of the `fuselab` tool; `args` excludes the program name.
/// Returns 0 on success, 1 on invalid input, 2 on numerical failure.
int run(const std::vector<std::string> &args, std::ostream &out = std::cout,
        std::ostream &err = std::cerr);

} // namespace fuselab::cli

#endif
