#pragma once

#include "logitcp/als.hpp"
#include "logitcp/config.hpp"
#include "logitcp/errors.hpp"
#include "logitcp/init.hpp"
#include "logitcp/io.hpp"
#include "logitcp/likelihood.hpp"
#include "logitcp/metrics.hpp"
#include "logitcp/multistart.hpp"
#include "logitcp/operators.hpp"
#include "logitcp/power.hpp"
#include "logitcp/selection.hpp"
#include "logitcp/simulate.hpp"
#include "logitcp/tensor.hpp"
