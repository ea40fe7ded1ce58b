#ifndef MLQE_MLQE_HPP
#define MLQE_MLQE_HPP

#include "mlqe/errors.hpp"
#include "mlqe/specfun.hpp"
#include "mlqe/matern.hpp"
#include "mlqe/gauss_lik.hpp"
#include "mlqe/simulate.hpp"
#include "mlqe/nelder_mead.hpp"
#include "mlqe/estimate.hpp"
#include "mlqe/asymptotics.hpp"
#include "mlqe/qselect.hpp"
#include "mlqe/variogram.hpp"
#include "mlqe/io.hpp"
#include "mlqe/experiment.hpp"

#endif  // MLQE_MLQE_HPP
