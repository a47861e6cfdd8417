#pragma once

namespace ctn {

// Subcommands: synth, train, predict, evaluate, finetune, sweep, serve.
// Returns 0 on success, 2 on argument errors, 1 on runtime errors.
int run_cli(int argc, char** argv);

}  // namespace ctn
