#ifndef LQRPI_LQRPI_HPP
#define LQRPI_LQRPI_HPP

#include "lqrpi/errors.hpp"
#include "lqrpi/matops.hpp"
#include "lqrpi/lqr.hpp"
#include "lqrpi/random.hpp"
#include "lqrpi/parallel.hpp"
#include "lqrpi/robustpi.hpp"
#include "lqrpi/olspi.hpp"
#include "lqrpi/io.hpp"
#include "lqrpi/bench.hpp"

#endif  // LQRPI_LQRPI_HPP
