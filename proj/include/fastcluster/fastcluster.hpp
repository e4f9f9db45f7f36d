#pragma once

#include "fastcluster/ann_search.hpp"
#include "fastcluster/bench.hpp"
#include "fastcluster/clustering.hpp"
#include "fastcluster/common.hpp"
#include "fastcluster/datasets.hpp"
#include "fastcluster/fast_operator.hpp"
#include "fastcluster/nystrom.hpp"
#include "fastcluster/palm4msa.hpp"
#include "fastcluster/sparse_factor.hpp"
