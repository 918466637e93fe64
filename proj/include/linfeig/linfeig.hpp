#pragma once

#include "linfeig/errors.hpp"
#include "linfeig/numeric.hpp"
#include "linfeig/sym_tensor.hpp"
#include "linfeig/geometry.hpp"
#include "linfeig/densities.hpp"
#include "linfeig/discretization.hpp"
#include "linfeig/normalization.hpp"
#include "linfeig/lbfgs.hpp"
#include "linfeig/psolver.hpp"
#include "linfeig/measures.hpp"
#include "linfeig/bounds.hpp"
#include "linfeig/continuation.hpp"
#include "linfeig/config.hpp"
#include "linfeig/app.hpp"
