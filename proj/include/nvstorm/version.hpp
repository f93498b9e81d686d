#pragma once

namespace nvstorm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nvstorm
