#include "ergow2/cli.hpp"

int main(int argc, char** argv) { return ergow2::run_cli(argc, argv); }
