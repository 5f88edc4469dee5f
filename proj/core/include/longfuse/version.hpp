#pragma once

namespace longfuse {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace longfuse
