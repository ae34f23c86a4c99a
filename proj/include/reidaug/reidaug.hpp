#pragma once

#include "augment.hpp"
#include "baseline.hpp"
#include "data.hpp"
#include "errors.hpp"
#include "evalkit.hpp"
#include "gan.hpp"
#include "image.hpp"
#include "image_io.hpp"
#include "nn/checkpoint.hpp"
#include "nn/layers.hpp"
#include "nn/loss.hpp"
#include "nn/optim.hpp"
#include "nn/preprocess.hpp"
#include "occlude.hpp"
#include "rng.hpp"
