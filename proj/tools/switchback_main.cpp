#include "switchback/cli.hpp"

int main(int argc, char** argv) { return switchback::run_cli(argc, argv); }
