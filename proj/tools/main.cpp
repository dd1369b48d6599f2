#include "protodiff/cli.hpp"

int main(int argc, char** argv) { return protodiff::cli::run(argc, argv); }
