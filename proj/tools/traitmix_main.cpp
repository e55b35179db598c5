#include <string>
#include <vector>

#include "traitmix/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return traitmix::cli::run(std::move(args));
}
