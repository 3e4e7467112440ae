#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace kcal::cli {

enum ExitCode : int { ok = 0, usage = 2, io = 3, training_abort = 4, compatibility = 5 };

/// Runs one `kcal` invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kcal::cli
