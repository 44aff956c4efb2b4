#pragma once

namespace emadapt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace emadapt
