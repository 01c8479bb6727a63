#include <catch2/catch_amalgamated.hpp>
#include "corrstress/corrstress.hpp"
