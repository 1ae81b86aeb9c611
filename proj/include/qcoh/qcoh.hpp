#pragma once

#include "bench.hpp"
#include "cluster.hpp"
#include "coherence.hpp"
#include "errors.hpp"
#include "estimate.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "qspec.hpp"
#include "quantreg.hpp"
#include "rng.hpp"
#include "sim.hpp"
#include "smooth.hpp"
#include "varfit.hpp"
