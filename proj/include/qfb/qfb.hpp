#pragma once

#include "qfb/core.hpp"
#include "qfb/gaussian.hpp"
#include "qfb/dynamics.hpp"
#include "qfb/unravelling.hpp"
#include "qfb/feedback.hpp"
#include "qfb/optimize.hpp"
#include "qfb/nopo.hpp"
#include "qfb/trajectories.hpp"
