#include "lightyolo/cli.hpp"

int main(int argc, char** argv) { return lightyolo::cli::run(argc, argv); }
