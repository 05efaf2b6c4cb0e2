#pragma once

#include "splitsr/cost.hpp"
#include "splitsr/coverage.hpp"
#include "splitsr/eval.hpp"
#include "splitsr/trainer.hpp"
#include "splitsr/weights_io.hpp"
#include "splitsr/zoom.hpp"
