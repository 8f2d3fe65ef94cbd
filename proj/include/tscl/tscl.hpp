#pragma once

#include "tscl/activation.hpp"
#include "tscl/csv.hpp"
#include "tscl/errors.hpp"
#include "tscl/experiment.hpp"
#include "tscl/gaussian_integrals.hpp"
#include "tscl/metrics.hpp"
#include "tscl/network.hpp"
#include "tscl/ode.hpp"
#include "tscl/order_params.hpp"
#include "tscl/plot.hpp"
#include "tscl/rng.hpp"
#include "tscl/task.hpp"
#include "tscl/task_gen.hpp"
#include "tscl/training.hpp"
