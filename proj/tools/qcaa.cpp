#include "qcaa/cli.hpp"

int main(int argc, char** argv) { return qcaa::cli::run(argc, argv); }
