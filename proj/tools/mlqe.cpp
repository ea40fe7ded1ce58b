#include "cli.hpp"

int main(int argc, char** argv) { return mlqe::cli::run_cli(argc, argv); }
