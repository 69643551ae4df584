#include "advgame/cli.hpp"

int main(int argc, char** argv) { return advgame::cli_main(argc, argv); }
