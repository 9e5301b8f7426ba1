#pragma once

#include "tproj/alignment.hpp"
#include "tproj/backends/http.hpp"
#include "tproj/backends/mock.hpp"
#include "tproj/corpus.hpp"
#include "tproj/error.hpp"
#include "tproj/eval.hpp"
#include "tproj/generation.hpp"
#include "tproj/pipeline.hpp"
#include "tproj/prompting.hpp"
#include "tproj/scoring.hpp"
#include "tproj/selection.hpp"
