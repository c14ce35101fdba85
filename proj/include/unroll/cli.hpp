#pragma once

namespace unroll {

// Entry point behind the `unroll` binary. Subcommands:
//   gen-data    write the synthetic corpus (JSON) for a seed
//   properties  certification sweep: empirical sups vs closed-form bounds
//   train       one training run, record written as JSON
//   experiment  full grid driver: records JSON + aggregate CSV + SVG plot
//   report      re-aggregate a records JSON into CSV + SVG
// Returns 0 on success, 1 on usage errors, 2 on run failures (including a
// certification sweep that found violations).
int cli_main(int argc, const char* const* argv);

}  // namespace unroll
