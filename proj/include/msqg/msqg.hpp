// SPDX-License-Identifier: Apache-2.0
/**
 * @file msqg.hpp
 * @brief Umbrella header.
 */
#pragma once

#include "dynamics.hpp"
#include "ensemble.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "kernel.hpp"
#include "kernel_table.hpp"
#include "pairing.hpp"
#include "parallel.hpp"
#include "report_io.hpp"
#include "spectral.hpp"
#include "stats.hpp"
#include "torus.hpp"
