#include <iostream>

#include "strata/cli.hpp"

int main(int argc, char** argv)
{
    return strata::dispatch({argv + 1, argv + argc}, std::cout, std::cerr);
}
