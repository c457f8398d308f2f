// Umbrella header: the whole library, including the run pipeline.
#pragma once

#include "psafe/core.hpp"
#include "psafe/gaussian.hpp"
#include "psafe/model.hpp"
#include "psafe/model_json.hpp"
#include "psafe/indicator.hpp"
#include "psafe/mixture_reduce.hpp"
#include "psafe/obs_grid.hpp"
#include "psafe/finite_abstraction.hpp"
#include "psafe/gm_abstraction.hpp"
#include "psafe/pbvi.hpp"
#include "psafe/bounds.hpp"
#include "psafe/simulate.hpp"
#include "psafe/io.hpp"
#include "psafe/cli.hpp"
