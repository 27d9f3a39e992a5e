#include "mrgbsde/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mrgbsde::log {

Level threshold() {
    static const Level level = [] {
        const char* env = std::getenv("MRGBSDE_LOG");
        if (!env) return Level::warn;
        if (std::strcmp(env, "error") == 0) return Level::error;
        if (std::strcmp(env, "warn") == 0) return Level::warn;
        if (std::strcmp(env, "info") == 0) return Level::info;
        if (std::strcmp(env, "debug") == 0) return Level::debug;
        return Level::warn;
    }();
    return level;
}

void write(Level level, const std::string& message) {
    if (level > threshold()) return;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::fprintf(stderr, "[mrgbsde:%s] %s\n", names[static_cast<int>(level)],
                 message.c_str());
}

}  // namespace mrgbsde::log
