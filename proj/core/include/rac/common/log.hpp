#pragma once

#include <spdlog/spdlog.h>

namespace rac {

// Reads RAC_LOG_LEVEL (trace, debug, info, warn, error, off) once and applies
// it to the default spdlog logger. Safe to call repeatedly.
void init_logging();

}  // namespace rac
