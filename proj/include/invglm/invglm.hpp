#ifndef INVGLM_INVGLM_HPP
#define INVGLM_INVGLM_HPP

#include "aggregator.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "glm_core.hpp"
#include "io.hpp"
#include "link.hpp"
#include "objectives.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "simulation.hpp"

#endif
