#pragma once

// Umbrella header.

#include "orbis/error.hpp"
#include "orbis/manifold.hpp"
#include "orbis/vmf.hpp"
#include "orbis/encoder.hpp"
#include "orbis/losses.hpp"
#include "orbis/optimizer.hpp"
#include "orbis/taxonomy.hpp"
#include "orbis/inference.hpp"
#include "orbis/metrics.hpp"
#include "orbis/diagnostics.hpp"
#include "orbis/io.hpp"
#include "orbis/config.hpp"
#include "orbis/checkpoint.hpp"
#include "orbis/synthetic.hpp"
#include "orbis/app.hpp"
