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

#include "fuselab/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace fuselab {

unsigned resolve_threads(unsigned requested)
{
  if(requested > 0)
    return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)> &body)
{
  if(n == 0)
    return;
  const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), n);
  if(workers == 1)
    {
    body(0, n);
    return;
    }

  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for(std::size_t w = 0; w < workers; ++w)
    {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try
        {
        body(begin, end);
        }
      catch(...)
        {
        errors[w] = std::current_exception();
        }
    });
    }
  for(auto &t : pool)
    t.join();
  for(auto &e : errors)
    if(e)
      std::rethrow_exception(e);
}

} // namespace fuselab
