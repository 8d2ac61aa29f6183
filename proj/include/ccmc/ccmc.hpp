#pragma once

// Umbrella header: the whole library in one include.

#include "ccmc/attention.hpp"
#include "ccmc/chain.hpp"
#include "ccmc/core.hpp"
#include "ccmc/errors.hpp"
#include "ccmc/experiments.hpp"
#include "ccmc/graph.hpp"
#include "ccmc/io.hpp"
#include "ccmc/learn.hpp"
#include "ccmc/plot.hpp"
#include "ccmc/rng.hpp"
#include "ccmc/trajectory.hpp"
