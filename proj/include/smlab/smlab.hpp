#pragma once

#include "smlab/error.hpp"
#include "smlab/rng.hpp"
#include "smlab/parallel.hpp"
#include "smlab/model.hpp"
#include "smlab/simulate.hpp"
#include "smlab/quadrature.hpp"
#include "smlab/kernel.hpp"
#include "smlab/path_analysis.hpp"
#include "smlab/transform.hpp"
#include "smlab/smoothing.hpp"
#include "smlab/decomposition.hpp"
#include "smlab/verdict.hpp"
#include "smlab/time_change.hpp"
#include "smlab/malliavin.hpp"
#include "smlab/scenario.hpp"
