#include "crossseg/cli.hpp"

int main(int argc, char** argv) { return crossseg::run_cli(argc, argv); }
