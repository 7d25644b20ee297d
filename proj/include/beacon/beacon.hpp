#pragma once

#include "beacon/ensemble.hpp"
#include "beacon/error.hpp"
#include "beacon/hash.hpp"
#include "beacon/ingest.hpp"
#include "beacon/loop.hpp"
#include "beacon/model.hpp"
#include "beacon/parallel.hpp"
#include "beacon/rng.hpp"
#include "beacon/samplers.hpp"
#include "beacon/synthbench.hpp"
