#pragma once

#include <spdlog/logger.h>

namespace hcil {

// Library-wide logger; writes to stderr so CLI stdout stays machine-readable.
spdlog::logger& logger();

}  // namespace hcil
