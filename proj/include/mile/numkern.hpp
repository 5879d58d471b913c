#pragma once

#include "mile/errors.hpp"
#include "mile/linalg.hpp"
#include "mile/optimize.hpp"
#include "mile/special_functions.hpp"
#include "mile/types.hpp"
