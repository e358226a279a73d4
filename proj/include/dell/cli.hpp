#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dell {

/// `$DELL_HOME`, or `./dell_home` when unset.
std::filesystem::path dell_home();

/// Entry point of the `dell` binary. Returns the process exit code.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace dell
