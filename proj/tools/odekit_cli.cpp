#include "odekit/cli.hpp"

int main(int argc, char** argv) { return odekit::cli::run_cli(argc, argv); }
