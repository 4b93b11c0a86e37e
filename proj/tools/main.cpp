#include "minerva/cli.hpp"

int main(int argc, char** argv) { return minerva::cli::run(argc, argv); }
