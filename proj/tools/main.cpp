#include "span2d/cli.hpp"

int main(int argc, char** argv) { return span2d::run_command(argc, argv); }
