#include "ipr/cli.hpp"

int main(int argc, char** argv) { return ipr::ipr_main(argc, argv); }
