#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amm/data.hpp"

namespace amm {

/// Parses a CSV of `label,p0,...,p{n-1}` rows, where the pixels are integers in
/// [0,255] in row-major channel-last order and n = height·width·channels. Label
/// 10 is read as digit 0. Blank lines and lines starting with '#' are skipped.
Dataset read_pixel_csv(const std::filesystem::path& path, int64_t height, int64_t width,
                       int64_t channels);

/// Entry point of the `amm` tool. Returns the process exit status; errors are
/// reported on stderr.
int run_cli(int argc, char** argv);

}  // namespace amm
