#include "experiment.hpp"

int main(int argc, char** argv) { return pbw::cli::run_cli(argc, argv); }
