#include "daisen/cli.hpp"

int main(int argc, char** argv) { return daisen::cli::run(argc, argv); }
