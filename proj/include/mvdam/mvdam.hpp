#pragma once

#include "mvdam/error.hpp"
#include "mvdam/rng.hpp"
#include "mvdam/tensor.hpp"
#include "mvdam/param_store.hpp"
#include "mvdam/autodiff.hpp"
#include "mvdam/adadelta.hpp"
#include "mvdam/gradcheck.hpp"
#include "mvdam/checkpoint.hpp"
#include "mvdam/corpus.hpp"
#include "mvdam/vocab.hpp"
#include "mvdam/synth.hpp"
#include "mvdam/graphembed.hpp"
#include "mvdam/encoders.hpp"
#include "mvdam/model.hpp"
#include "mvdam/metrics.hpp"
#include "mvdam/train.hpp"
#include "mvdam/baselines.hpp"
#include "mvdam/calibrank.hpp"
#include "mvdam/report.hpp"
#include "mvdam/selfcheck.hpp"
#include "mvdam/ladder.hpp"
