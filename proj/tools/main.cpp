#include <string>
#include <vector>

#include "t2v/cli.hpp"

int main(int argc, char** argv) {
    return t2v::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
