#pragma once
// Command-line front end. run_cli parses argv and executes one subcommand;
// it reports problems on stderr and never throws.
//
// Exit status contract: 0 on success (and on a compare that matches), 1 on a
// comparison mismatch or a failed inference, 2 on usage, file or format
// errors.

namespace tcemu::cli {

int run_cli(int argc, const char* const* argv);

} // namespace tcemu::cli
