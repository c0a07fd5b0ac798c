#include <string>
#include <vector>

#include "planenav/cli.hpp"

int main(int argc, char** argv) {
    return planenav::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
