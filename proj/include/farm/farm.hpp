#pragma once

#include "farm/error.hpp"
#include "farm/ledger.hpp"
#include "farm/mechanism.hpp"
#include "farm/pipeline.hpp"
#include "farm/rng.hpp"
#include "farm/scenario_io.hpp"
#include "farm/signal.hpp"
#include "farm/sim.hpp"
#include "farm/snapshot.hpp"
#include "farm/topology.hpp"
#include "farm/verifier.hpp"
