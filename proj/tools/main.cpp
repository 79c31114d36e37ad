#include "cli.hpp"

int main(int argc, char** argv) { return xssm::cli::run(argc, argv); }
