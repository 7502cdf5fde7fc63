#include "odetex/cli.hpp"

int main(int argc, char** argv) { return odetex::io::run_cli(argc, argv); }
