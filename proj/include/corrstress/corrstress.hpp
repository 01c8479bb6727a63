#pragma once

// Umbrella header: parametric correlation surfaces, Bayesian factor
// selection, NIG scenario distributions, and correlation stress testing.

#include "corrstress/common.hpp"
#include "corrstress/dates.hpp"
#include "corrstress/math.hpp"
#include "corrstress/corrmodel.hpp"
#include "corrstress/factorselect.hpp"
#include "corrstress/distfit.hpp"
#include "corrstress/ingest.hpp"
#include "corrstress/stress.hpp"
#include "corrstress/io.hpp"
#include "corrstress/plots.hpp"
#include "corrstress/pipeline.hpp"
