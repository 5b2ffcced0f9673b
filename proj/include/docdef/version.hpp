#pragma once

namespace docdef {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace docdef
