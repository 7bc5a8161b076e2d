#pragma once

// Umbrella header for the whole library.

#include "trajgp/errors.hpp"
#include "trajgp/kernels.hpp"
#include "trajgp/linalg.hpp"
#include "trajgp/gp_regression.hpp"
#include "trajgp/lbfgs.hpp"
#include "trajgp/hyperopt.hpp"
#include "trajgp/online_gp.hpp"
#include "trajgp/trajectory_io.hpp"
#include "trajgp/force_analysis.hpp"
#include "trajgp/flow_clustering.hpp"
#include "trajgp/synthetic.hpp"
#include "trajgp/cli.hpp"
