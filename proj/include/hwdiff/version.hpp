#pragma once

namespace hwdiff {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hwdiff
