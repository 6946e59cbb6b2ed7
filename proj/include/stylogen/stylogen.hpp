#pragma once

#include "stylogen/analysis.hpp"
#include "stylogen/cluster.hpp"
#include "stylogen/common.hpp"
#include "stylogen/corpus.hpp"
#include "stylogen/experiment.hpp"
#include "stylogen/generator.hpp"
#include "stylogen/model.hpp"
#include "stylogen/ngram.hpp"
#include "stylogen/nn/checkpoint.hpp"
#include "stylogen/nn/network.hpp"
#include "stylogen/nn/spec.hpp"
#include "stylogen/nn/train.hpp"
#include "stylogen/stylometry.hpp"
