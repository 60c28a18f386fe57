#include "tomodiff/cli.hpp"

int main(int argc, char** argv) { return tomodiff::cli_main(argc, argv); }
