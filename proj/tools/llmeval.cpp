#include "llmeval/cli.hpp"

int main(int argc, char** argv) { return llmeval::cli::run_cli(argc, argv); }
