#include <catch2/catch_amalgamated.hpp>
#include "pwseg/pwseg.hpp"
