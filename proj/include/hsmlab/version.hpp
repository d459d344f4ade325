#pragma once

namespace hsmlab {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace hsmlab
