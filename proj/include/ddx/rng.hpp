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

#ifndef DDX_RNG_HPP_
#define DDX_RNG_HPP_

#include <cstdint>
#include <string_view>

namespace ddx {

std::uint64_t splitmix64(std::uint64_t x);
// FNV-1a; used to turn string ids into stream ids.
std::uint64_t hash_string(std::string_view s);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

// Counter-based generator keyed by (seed, stream). The n-th draw depends only
// on (seed, stream, n), so per-item streams are independent of scheduling.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Child stream for a sub-task; deterministic in (seed, stream, tag).
  RngStream derive(std::uint64_t tag) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal (Box-Muller, second variate cached).
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace ddx

#endif  // DDX_RNG_HPP_
