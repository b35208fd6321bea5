#include "pitlab/cli.hpp"

int main(int argc, char** argv) { return pitlab::cli::dispatch(argc, argv); }
