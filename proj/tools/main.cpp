#include "wdistill/cli.hpp"

int main(int argc, char** argv) { return wdistill::cli_run(argc, argv); }
