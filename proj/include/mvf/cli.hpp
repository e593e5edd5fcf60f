#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mvf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr const char* kOutputRootEnv = "MVF_OUTPUT_ROOT";

// Relative output paths are placed under $MVF_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int main(int argc, char** argv);

}  // namespace mvf::cli
