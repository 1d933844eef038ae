#pragma once

#include "qcaa/attention.hpp"
#include "qcaa/checkpoint.hpp"
#include "qcaa/data.hpp"
#include "qcaa/errors.hpp"
#include "qcaa/grad_check.hpp"
#include "qcaa/metrics.hpp"
#include "qcaa/model.hpp"
#include "qcaa/ops.hpp"
#include "qcaa/patching.hpp"
#include "qcaa/quantum.hpp"
#include "qcaa/rng.hpp"
#include "qcaa/tensor.hpp"
#include "qcaa/text.hpp"
#include "qcaa/training.hpp"
