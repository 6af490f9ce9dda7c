#include "blocktower/cli.hpp"

int main(int argc, char** argv) { return blocktower::cli::run(argc, argv); }
