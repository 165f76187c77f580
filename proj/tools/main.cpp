#include "cli.hpp"

int main(int argc, char** argv) { return gazeid::cli::run(argc, argv); }
