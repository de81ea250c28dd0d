#pragma once

// Umbrella header.
#include "mtsd/basis.hpp"
#include "mtsd/checkpoint.hpp"
#include "mtsd/data/canonical.hpp"
#include "mtsd/data/dataset.hpp"
#include "mtsd/data/preprocess.hpp"
#include "mtsd/data/synth.hpp"
#include "mtsd/data/ucihar.hpp"
#include "mtsd/decomposer.hpp"
#include "mtsd/diff/array.hpp"
#include "mtsd/diff/gradcheck.hpp"
#include "mtsd/diff/ops.hpp"
#include "mtsd/error.hpp"
#include "mtsd/harness/adam.hpp"
#include "mtsd/harness/config.hpp"
#include "mtsd/harness/export.hpp"
#include "mtsd/harness/gradcheck_all.hpp"
#include "mtsd/harness/metrics.hpp"
#include "mtsd/harness/mlp.hpp"
#include "mtsd/harness/protocol.hpp"
#include "mtsd/harness/train.hpp"
#include "mtsd/heads.hpp"
#include "mtsd/model.hpp"
#include "mtsd/network.hpp"
