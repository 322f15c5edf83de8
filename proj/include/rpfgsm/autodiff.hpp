#pragma once

#include "rpfgsm/autodiff/engine.hpp"
#include "rpfgsm/autodiff/expr.hpp"
#include "rpfgsm/tensor.hpp"
