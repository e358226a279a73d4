#include "dell/cli.hpp"

int main(int argc, char** argv) { return dell::cli_main(argc, argv); }
