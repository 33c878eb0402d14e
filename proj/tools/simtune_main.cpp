#include "simtune/cli.hpp"

int main(int argc, char** argv) { return simtune::run_cli(argc, argv); }
