#include "rac/common/log.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

namespace rac {

void init_logging() {
  static std::once_flag once;
  std::call_once(once, [] {
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("RAC_LOG_LEVEL")) {
      spdlog::set_level(spdlog::level::from_str(level));
    }
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  });
}

}  // namespace rac
