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

#ifndef FUSELAB_PARALLEL_HPP
#define FUSELAB_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace fuselab {

/// 0 means "one per hardware thread".
unsigned resolve_threads(unsigned requested);

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks never
/// overlap, so bodies that write only their own range are race-free. If bodies
/// throw, the exception of the lowest chunk is rethrown.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)> &body);

} // namespace fuselab

#endif
