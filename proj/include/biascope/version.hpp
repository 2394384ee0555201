#pragma once

namespace biascope {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace biascope
