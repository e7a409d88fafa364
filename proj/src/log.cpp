#include "hcil/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

namespace hcil {

spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto existing = spdlog::get("hcil");
        if (existing) {
            return existing;
        }
        auto created = spdlog::stderr_logger_mt("hcil");
        created->set_pattern("%l: %v");
        created->set_level(spdlog::level::warn);
        return created;
    }();
    return *instance;
}

}  // namespace hcil
