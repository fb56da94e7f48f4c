// Copyright 2026 The heinfer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file reference.hpp
/// @brief Published measurements of the original HEAAN deployment, printed
/// next to desk-scale results for orientation. They come from trained weights
/// and real ciphertexts and are not expected to be reproduced.
#pragma once

#include <array>
#include <string_view>

namespace heinfer::reference {

struct BlockRow {
  std::string_view block;
  double teacher;
  double student1;
  double student2;
};

/// Average per-block MAE between plaintext and encrypted intermediates.
inline constexpr std::array<BlockRow, 3> kMae{{
    {"Convolution", 0.0779, 0.0860, 0.0873},
    {"Linear", 0.0129, 0.0185, 0.0203},
    {"OpenAI Gym Library Blackbox", 0.0210, 0.0206, 0.0201},
}};

/// Inference time in seconds.
inline constexpr std::array<BlockRow, 4> kSeconds{{
    {"Convolution", 1006337.18, 9508.44, 9510.22},
    {"Linear", 13662.48, 43670.76, 41989.52},
    {"OpenAI Gym Library Blackbox", 4574.82, 4725.92, 4668.19},
    {"Total", 1024754.48, 57905.12, 56167.93},
}};

inline constexpr double kR2Teacher = 0.9631;
inline constexpr double kR2Student2 = 0.9499;

struct FilterPoint {
  int filters;
  double mae;
  double r2;
  double seconds;
};

/// Student feature-extractor filter sweep.
inline constexpr std::array<FilterPoint, 4> kFilterSweep{{
    {16, 0.1724, 0.9073, 4205.10},
    {32, 0.0873, 0.9499, 9510.22},
    {64, 0.0814, 0.9566, 14968.49},
    {128, 0.0791, 0.9578, 35027.18},
}};

}  // namespace heinfer::reference
