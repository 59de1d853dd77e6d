#pragma once

#include <string>

namespace amm::log {

/// Sets the level from AMM_LOG (error, info or debug; info when unset).
/// Throws ConfigError on any other value.
void init_from_env();

void error(const std::string& message);
void info(const std::string& message);
void debug(const std::string& message);

}  // namespace amm::log
