#pragma once

namespace attriq {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace attriq
