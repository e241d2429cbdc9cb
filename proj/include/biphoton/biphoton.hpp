// Umbrella header for the biphoton simulation and analysis toolkit.

#pragma once

#include "biphoton/grid.hpp"
#include "biphoton/fft.hpp"
#include "biphoton/modes.hpp"
#include "biphoton/io.hpp"
#include "biphoton/spdc.hpp"
#include "biphoton/holography.hpp"
#include "biphoton/modal.hpp"
#include "biphoton/events.hpp"
#include "biphoton/fitting.hpp"
