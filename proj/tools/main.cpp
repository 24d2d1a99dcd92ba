#include "agssl/cli.hpp"

int main(int argc, char** argv) { return agssl::cli::run(argc, argv); }
