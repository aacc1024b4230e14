#include "profs/runner.hpp"

int main(int argc, char** argv) { return profs::run_cli(argc, argv); }
