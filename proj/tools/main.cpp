#include "flowprofiler/cli.hpp"

int main(int argc, char** argv) {
    return flowprofiler::cli_main(argc, argv);
}
