#include "latte/error.hpp"
