#pragma once

#include <ostream>

namespace jssu {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitInvalid = 2,
};

/// Entry point for `jssu simulate|train|eval|infer|gradcheck`. Failures print one
/// line "error: invalid-input: ..." or "error: internal: ..." to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jssu
