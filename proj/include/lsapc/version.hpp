#pragma once

namespace lsapc {

inline constexpr const char* version() { return "0.1.0"; }

}  // namespace lsapc
