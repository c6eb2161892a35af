#pragma once

#include "fea2fea/application.hpp"
#include "fea2fea/autodiff.hpp"
#include "fea2fea/binning.hpp"
#include "fea2fea/concat.hpp"
#include "fea2fea/error.hpp"
#include "fea2fea/features.hpp"
#include "fea2fea/generators.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/graph_ops.hpp"
#include "fea2fea/io.hpp"
#include "fea2fea/layers.hpp"
#include "fea2fea/model.hpp"
#include "fea2fea/multiple.hpp"
#include "fea2fea/optim.hpp"
#include "fea2fea/parallel.hpp"
#include "fea2fea/random.hpp"
#include "fea2fea/single.hpp"
#include "fea2fea/split.hpp"
#include "fea2fea/stats.hpp"
#include "fea2fea/tensor.hpp"
#include "fea2fea/train.hpp"
