#include "amm/commands.hpp"

int main(int argc, char** argv) { return amm::run_cli(argc, argv); }
