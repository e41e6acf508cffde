#pragma once

#include "distlq/errors.hpp"
#include "distlq/numerics.hpp"
#include "distlq/model.hpp"
#include "distlq/centralized.hpp"
#include "distlq/consensus.hpp"
#include "distlq/distributed.hpp"
#include "distlq/multi_agent.hpp"
#include "distlq/scenario.hpp"
