#pragma once

#include <iostream>
#include <string_view>

namespace vos {

inline bool& warnings_enabled() {
    static bool enabled = true;
    return enabled;
}

inline void log_warn(std::string_view msg) {
    if (warnings_enabled()) std::cerr << "warning: " << msg << '\n';
}

} // namespace vos
