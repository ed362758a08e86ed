#pragma once

#include "lgcp/config.hpp"
#include "lgcp/correlation.hpp"
#include "lgcp/diagnostics.hpp"
#include "lgcp/embedding.hpp"
#include "lgcp/grid.hpp"
#include "lgcp/hmc.hpp"
#include "lgcp/io.hpp"
#include "lgcp/kfunction.hpp"
#include "lgcp/math.hpp"
#include "lgcp/mincontrast.hpp"
#include "lgcp/optim.hpp"
#include "lgcp/parallel.hpp"
#include "lgcp/posterior.hpp"
#include "lgcp/random.hpp"
#include "lgcp/simulate.hpp"
#include "lgcp/vb.hpp"
