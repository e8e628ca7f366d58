#pragma once

#include "corrgee/diagnostics.hpp"
#include "corrgee/fit.hpp"
#include "corrgee/gee_core.hpp"
#include "corrgee/links.hpp"
#include "corrgee/model_data.hpp"
#include "corrgee/normal.hpp"
#include "corrgee/results_io.hpp"
#include "corrgee/rng.hpp"
#include "corrgee/selection.hpp"
#include "corrgee/simulate.hpp"
#include "corrgee/variance.hpp"
