#include "tcemu/cli.hpp"

int main(int argc, char** argv) { return tcemu::cli::run_cli(argc, argv); }
