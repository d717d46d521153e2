#pragma once

#include "sal/cli.hpp"
#include "sal/data.hpp"
#include "sal/experiment.hpp"
#include "sal/layers.hpp"
#include "sal/network.hpp"
#include "sal/numerics.hpp"
