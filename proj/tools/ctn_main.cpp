#include "ctn/cli.hpp"

int main(int argc, char** argv) { return ctn::run_cli(argc, argv); }
