#pragma once

#include "balancer/allocators.hpp"
#include "balancer/balance.hpp"
#include "balancer/inference.hpp"
#include "balancer/io.hpp"
#include "balancer/model.hpp"
#include "balancer/rng.hpp"
#include "balancer/simlab.hpp"
#include "balancer/theory.hpp"
