#pragma once

// Umbrella header: the whole library in one include.

#include "ivmatch/cohort.hpp"
#include "ivmatch/config.hpp"
#include "ivmatch/csv.hpp"
#include "ivmatch/diagnostics.hpp"
#include "ivmatch/distance.hpp"
#include "ivmatch/errors.hpp"
#include "ivmatch/inference.hpp"
#include "ivmatch/ipmodel.hpp"
#include "ivmatch/pipeline.hpp"
#include "ivmatch/simplex.hpp"
#include "ivmatch/solver.hpp"
#include "ivmatch/study.hpp"
