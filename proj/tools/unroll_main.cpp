#include "unroll/cli.hpp"

int main(int argc, char** argv) { return unroll::cli_main(argc, argv); }
