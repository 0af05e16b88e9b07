#include "dufold/cli.hpp"

int main(int argc, char** argv) {
    return dufold::run_cli(argc, argv);
}
