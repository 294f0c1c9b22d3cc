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

#ifndef N2N_CLI_HPP_
#define N2N_CLI_HPP_

#include <string>
#include <vector>

namespace n2n::cli {

// Runs one CLI invocation (argv without the program name).
// Exit codes: 0 success, 1 usage error, 2 structural/validation error,
// 3 failed verification (verify only). Machine-readable output goes to
// stdout / declared paths; stderr carries human logs only.
int run(const std::vector<std::string>& args);

}  // namespace n2n::cli

#endif  // N2N_CLI_HPP_
