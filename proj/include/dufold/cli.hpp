#pragma once

namespace dufold {

/// Toolchain entry point. Subcommands: train, sample, eval, oracle-check,
/// bench, make-op. Exit codes: 0 ok, 1 usage, 2 config, 3 data, 4 numeric
/// divergence, 5 integrity.
int run_cli(int argc, char** argv);

}  // namespace dufold
