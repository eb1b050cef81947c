#include "nlie/cli.hpp"

int main(int argc, char** argv) { return nlie::cli_main(argc, argv); }
