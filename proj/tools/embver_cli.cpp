#include "embver/cli.hpp"

int main(int argc, char** argv) { return embver::cli_main(argc, argv); }
