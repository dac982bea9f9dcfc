#pragma once

namespace qrc {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace qrc
