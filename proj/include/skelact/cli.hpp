#pragma once

#include <filesystem>
#include <vector>

#include "skelact/skeleton.hpp"

namespace skelact {

// Entry point shared by the executable and the tests. Exit codes:
// 0 success, 1 usage error, 2 data error, 3 numerical error.
int run_cli(int argc, const char* const* argv);

// Every *.skel.jsonl under `dir`, sorted by filename.
std::vector<SkeletonSequence> load_dataset(const std::filesystem::path& dir);

}  // namespace skelact
