#pragma once

#include "clfl/config.hpp"
#include "clfl/controller.hpp"
#include "clfl/csv.hpp"
#include "clfl/errors.hpp"
#include "clfl/lockin.hpp"
#include "clfl/metrics.hpp"
#include "clfl/mw_chain.hpp"
#include "clfl/nv_model.hpp"
#include "clfl/scenarios.hpp"
#include "clfl/sim_engine.hpp"
#include "clfl/stimulus.hpp"
