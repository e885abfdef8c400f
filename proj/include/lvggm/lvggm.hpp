#pragma once

// Umbrella header: the numerical core without the CLI/bench layer.

#include "lvggm/baseline.hpp"
#include "lvggm/datagen.hpp"
#include "lvggm/errors.hpp"
#include "lvggm/linalg.hpp"
#include "lvggm/matrix_io.hpp"
#include "lvggm/objective.hpp"
#include "lvggm/projections.hpp"
#include "lvggm/random.hpp"
#include "lvggm/solvers.hpp"
