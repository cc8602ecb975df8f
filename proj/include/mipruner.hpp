#pragma once

#include "mipruner/entropy_mi.hpp"
#include "mipruner/error.hpp"
#include "mipruner/eval_metrics.hpp"
#include "mipruner/gram_kernel.hpp"
#include "mipruner/io.hpp"
#include "mipruner/pipeline.hpp"
#include "mipruner/prune_mask.hpp"
#include "mipruner/pruner_cluster.hpp"
#include "mipruner/pruner_pairwise.hpp"
#include "mipruner/random.hpp"
#include "mipruner/sigma_tuner.hpp"
#include "mipruner/toy_model.hpp"
