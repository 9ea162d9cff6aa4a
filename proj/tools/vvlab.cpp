#include "vvlab/cli.hpp"

int main(int argc, char** argv) { return vvlab::run_command(argc, argv); }
