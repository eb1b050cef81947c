#pragma once

#include <iosfwd>

namespace nlie {

/// Subcommands tensor, simulate, converge, dissipation, validate.
/// Returns 0 on success, 2 on usage or configuration errors, 3 when a
/// numerical precondition fails.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace nlie
