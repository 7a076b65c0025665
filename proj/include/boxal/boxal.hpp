#pragma once

#include "boxal/certainty.hpp"
#include "boxal/config.hpp"
#include "boxal/detection.hpp"
#include "boxal/detection_io.hpp"
#include "boxal/error.hpp"
#include "boxal/evaluation.hpp"
#include "boxal/geometry.hpp"
#include "boxal/grouping.hpp"
#include "boxal/io_util.hpp"
#include "boxal/orchestrator.hpp"
#include "boxal/random.hpp"
#include "boxal/sampling.hpp"
#include "boxal/simulator.hpp"
#include "boxal/statistics.hpp"
