// Copyright 2026 The ddx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DDX_PARALLEL_HPP_
#define DDX_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace ddx {

// Resolves a requested worker count: DDX_THREADS overrides, 0 means
// hardware concurrency.
int resolve_threads(int requested);

// Runs fn(i) for i in [0, n) on up to `threads` workers. Indices are handed out
// dynamically; callers write results by index so output never depends
// on the worker count. The first exception thrown is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace ddx

#endif  // DDX_PARALLEL_HPP_
