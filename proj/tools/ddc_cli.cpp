#include "ddc/harness.hpp"

int main(int argc, char** argv) { return ddc::cli(argc, argv); }
