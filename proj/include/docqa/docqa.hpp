#pragma once

#include "docqa/autodiff.hpp"
#include "docqa/config.hpp"
#include "docqa/corpus.hpp"
#include "docqa/dataset.hpp"
#include "docqa/gradcheck.hpp"
#include "docqa/gradcheck_suite.hpp"
#include "docqa/inference.hpp"
#include "docqa/jsonl.hpp"
#include "docqa/layers.hpp"
#include "docqa/objectives.hpp"
#include "docqa/rng.hpp"
#include "docqa/sampling.hpp"
#include "docqa/synth.hpp"
#include "docqa/text.hpp"
#include "docqa/training.hpp"
