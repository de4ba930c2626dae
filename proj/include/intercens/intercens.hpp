#pragma once

#include "intercens/aft.hpp"
#include "intercens/bayes.hpp"
#include "intercens/core.hpp"
#include "intercens/csv.hpp"
#include "intercens/diagnostics.hpp"
#include "intercens/errors.hpp"
#include "intercens/hmc.hpp"
#include "intercens/math.hpp"
#include "intercens/metrics.hpp"
#include "intercens/psis.hpp"
#include "intercens/simgen.hpp"
#include "intercens/turnbull.hpp"
