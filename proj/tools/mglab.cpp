#include "mglab/cli/commands.hpp"

int main(int argc, char** argv)
{
    return mglab::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
