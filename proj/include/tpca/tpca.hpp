#pragma once

#include "tpca/baselines.hpp"
#include "tpca/bench.hpp"
#include "tpca/coherence.hpp"
#include "tpca/cp_model.hpp"
#include "tpca/cpca.hpp"
#include "tpca/error.hpp"
#include "tpca/ico.hpp"
#include "tpca/parallel.hpp"
#include "tpca/propcheck.hpp"
#include "tpca/random.hpp"
#include "tpca/serialize.hpp"
#include "tpca/spectral.hpp"
#include "tpca/tensor.hpp"
#include "tpca/tensor_io.hpp"
