#include "cplab/cli.hpp"

int main(int argc, char** argv) { return cplab::run_cli(argc, argv); }
