#include "farm_cli.hpp"

int main(int argc, char** argv) { return farm::cli::run(argc, argv); }
