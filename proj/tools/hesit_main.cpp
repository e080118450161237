#include "hesit/cli.hpp"

int main(int argc, char** argv) { return hesit::cli::run(argc, argv); }
