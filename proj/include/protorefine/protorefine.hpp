#pragma once

#include "protorefine/error.hpp"
#include "protorefine/eval.hpp"
#include "protorefine/io.hpp"
#include "protorefine/linear_head.hpp"
#include "protorefine/noise.hpp"
#include "protorefine/parallel.hpp"
#include "protorefine/pipeline.hpp"
#include "protorefine/relabel.hpp"
#include "protorefine/rng.hpp"
#include "protorefine/sim_bench.hpp"
#include "protorefine/sweep.hpp"
#include "protorefine/types.hpp"
