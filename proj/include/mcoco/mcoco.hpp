#pragma once

#include "mcoco/checkpoint.hpp"
#include "mcoco/data.hpp"
#include "mcoco/error.hpp"
#include "mcoco/kmeans.hpp"
#include "mcoco/losses.hpp"
#include "mcoco/metrics.hpp"
#include "mcoco/model.hpp"
#include "mcoco/nn.hpp"
#include "mcoco/objective.hpp"
#include "mcoco/optim.hpp"
#include "mcoco/projection.hpp"
#include "mcoco/rng.hpp"
#include "mcoco/trainer.hpp"
