#pragma once

#include "tdbsde/errors.hpp"
#include "tdbsde/time_grid.hpp"
#include "tdbsde/grid_function.hpp"
#include "tdbsde/path_calculus.hpp"
#include "tdbsde/path_array.hpp"
#include "tdbsde/stochastic_engine.hpp"
#include "tdbsde/regression.hpp"
#include "tdbsde/ensemble_io.hpp"
#include "tdbsde/problem.hpp"
#include "tdbsde/norms.hpp"
#include "tdbsde/assumptions.hpp"
#include "tdbsde/generators.hpp"
#include "tdbsde/picard_solver.hpp"
#include "tdbsde/stability_lab.hpp"
#include "tdbsde/experiment.hpp"
