#pragma once

namespace scmine {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace scmine
