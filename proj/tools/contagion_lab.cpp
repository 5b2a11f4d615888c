#include "clab/cli.hpp"

int main(int argc, char** argv) { return clab::cli::dispatch(argc, argv); }
