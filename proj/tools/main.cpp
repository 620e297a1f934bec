#include "sdr/cli.hpp"

int main(int argc, char** argv) { return sdr::cli::run_cli(argc, argv); }
