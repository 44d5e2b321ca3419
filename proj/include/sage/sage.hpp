#pragma once

#include "sage/core.hpp"
#include "sage/dataset.hpp"
#include "sage/pseudofeatures.hpp"
#include "sage/migraph.hpp"
#include "sage/backend.hpp"
#include "sage/guidance.hpp"
#include "sage/engine.hpp"
#include "sage/sampler.hpp"
#include "sage/evaluation.hpp"
#include "sage/sweep.hpp"
#include "sage/artifact.hpp"
#include "sage/pipeline.hpp"
