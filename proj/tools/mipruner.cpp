#include "mipruner/cli.hpp"

int main(int argc, char** argv) { return mipruner::cli::run(argc, argv); }
