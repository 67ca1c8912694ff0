#pragma once

#include <string>
#include <vector>

namespace ael::cli {

enum ExitCode : int { kOk = 0, kRuntime = 1, kConfig = 2 };

// Entry point shared by the executable and the tests. Returns the exit code.
int main(int argc, const char* const* argv);
int main(const std::vector<std::string>& args);  // args excludes the program name

std::string version();

}  // namespace ael::cli
