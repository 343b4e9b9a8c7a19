#pragma once

#include "gastkit/archive.hpp"
#include "gastkit/box.hpp"
#include "gastkit/conv.hpp"
#include "gastkit/dataset.hpp"
#include "gastkit/decoder.hpp"
#include "gastkit/errors.hpp"
#include "gastkit/eval_metrics.hpp"
#include "gastkit/geometry_prior.hpp"
#include "gastkit/losses.hpp"
#include "gastkit/model.hpp"
#include "gastkit/nn.hpp"
#include "gastkit/ops.hpp"
#include "gastkit/runtime.hpp"
#include "gastkit/synthscene.hpp"
#include "gastkit/tensor.hpp"
