#pragma once

#include "polyqa/config.hpp"
#include "polyqa/corpus.hpp"
#include "polyqa/dense_index.hpp"
#include "polyqa/encoder.hpp"
#include "polyqa/error.hpp"
#include "polyqa/evalkit.hpp"
#include "polyqa/generator.hpp"
#include "polyqa/miner.hpp"
#include "polyqa/pipeline.hpp"
#include "polyqa/wire.hpp"
