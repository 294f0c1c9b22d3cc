/* Copyright 2026 The n2n Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef N2N_PARALLEL_HPP_
#define N2N_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace n2n {

// Worker count: min(hardware_concurrency, N2N_THREADS). Read once.
std::size_t thread_budget();

// Runs body(begin, end) over a contiguous partition of [0, n). Each range
// is disjoint, so results are identical to the serial execution as long as
// the body only writes indices it owns. Small n runs inline.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace n2n

#endif  // N2N_PARALLEL_HPP_
