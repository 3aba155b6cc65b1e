#pragma once

#include "edgefall/ablation.hpp"
#include "edgefall/config.hpp"
#include "edgefall/data.hpp"
#include "edgefall/distill.hpp"
#include "edgefall/errors.hpp"
#include "edgefall/evaluate.hpp"
#include "edgefall/io.hpp"
#include "edgefall/lstm.hpp"
#include "edgefall/parallel.hpp"
#include "edgefall/power.hpp"
#include "edgefall/sensors.hpp"
#include "edgefall/tensor.hpp"
#include "edgefall/trainer.hpp"

namespace edgefall {
inline constexpr const char* kVersion = "0.1.0";
}
