#include "cw/cli.hpp"

int main(int argc, char** argv) {
    return cw::run_cli(argc, argv);
}
