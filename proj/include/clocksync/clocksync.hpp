#pragma once

#include "clocksync/analysis.hpp"
#include "clocksync/bp.hpp"
#include "clocksync/clock_sim.hpp"
#include "clocksync/error.hpp"
#include "clocksync/harness.hpp"
#include "clocksync/linalg.hpp"
#include "clocksync/observations.hpp"
#include "clocksync/rng.hpp"
#include "clocksync/scenario.hpp"
#include "clocksync/scheduler.hpp"
#include "clocksync/topology.hpp"
