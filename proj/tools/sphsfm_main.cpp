#include "sphsfm/cli.hpp"

int main(int argc, char** argv) { return sphsfm::run_cli(argc, argv); }
