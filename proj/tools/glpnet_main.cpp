#include "glpnet/cli.hpp"

int main(int argc, char** argv) { return glpnet::run_cli(argc, argv); }
