#pragma once

#include "osc/model.hpp"
#include "osc/config_io.hpp"
#include "osc/fixtures.hpp"
#include "osc/state.hpp"
#include "osc/opt.hpp"
#include "osc/coordinator.hpp"
#include "osc/dynamics.hpp"
#include "osc/harness.hpp"
#include "osc/export.hpp"
