#include "migan_cli/cli.hpp"

int main(int argc, char** argv) { return migan::cli::run(argc, argv); }
