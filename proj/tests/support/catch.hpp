#pragma once

#ifdef STYLOGEN_CATCH_AMALGAMATED
#include <catch_amalgamated.hpp>
#else
#include <catch2/catch_all.hpp>
#endif
