#pragma once

#include "mriccati/errors.hpp"
#include "mriccati/linops.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/volterra.hpp"
#include "mriccati/lyapunov.hpp"
#include "mriccati/riccati.hpp"
#include "mriccati/oracle.hpp"
