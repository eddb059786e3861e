#pragma once

#include "searchgrid/baseline.hpp"
#include "searchgrid/fusion.hpp"
#include "searchgrid/geogrid.hpp"
#include "searchgrid/geometry.hpp"
#include "searchgrid/metrics.hpp"
#include "searchgrid/pomcp.hpp"
#include "searchgrid/pomdp.hpp"
#include "searchgrid/rollout.hpp"
#include "searchgrid/scenario.hpp"
#include "searchgrid/simulation.hpp"
#include "searchgrid/sketch.hpp"
