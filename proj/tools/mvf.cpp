#include "mvf/cli.hpp"

int main(int argc, char** argv) { return mvf::cli::main(argc, argv); }
