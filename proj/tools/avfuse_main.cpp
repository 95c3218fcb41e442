#include "avfuse/cli.hpp"

int main(int argc, char** argv) { return avfuse::run_command(argc, argv); }
