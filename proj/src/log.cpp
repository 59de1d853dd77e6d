#include "amm/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

#include "amm/errors.hpp"

namespace amm::log {

namespace {

spdlog::logger& logger() {
  static auto instance = [] {
    auto l = spdlog::stderr_color_mt("amm");
    l->set_pattern("[%H:%M:%S] [%l] %v");
    return l;
  }();
  return *instance;
}

}  // namespace

void init_from_env() {
  const char* env = std::getenv("AMM_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    logger().set_level(spdlog::level::err);
  } else if (level == "info") {
    logger().set_level(spdlog::level::info);
  } else if (level == "debug") {
    logger().set_level(spdlog::level::debug);
  } else {
    throw ConfigError("AMM_LOG must be error, info or debug, got '" + level + "'");
  }
}

void error(const std::string& message) { logger().error(message); }
void info(const std::string& message) { logger().info(message); }
void debug(const std::string& message) { logger().debug(message); }

}  // namespace amm::log
