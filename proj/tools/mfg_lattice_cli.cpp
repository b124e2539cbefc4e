#include "mfg_lattice/harness.hpp"

int main(int argc, char** argv) { return mfgl::cli_main(argc, argv); }
