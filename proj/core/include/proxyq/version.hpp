#pragma once

namespace proxyq {

inline constexpr const char* kVersion = "0.1.0";
// Bumped when the model file layout changes.
inline constexpr int kModelFormatVersion = 1;

}  // namespace proxyq
