#pragma once

#include "ldw/errors.hpp"
#include "ldw/domain.hpp"
#include "ldw/gmm.hpp"
#include "ldw/hmm.hpp"
#include "ldw/predictor.hpp"
#include "ldw/warning.hpp"
#include "ldw/dataio.hpp"
#include "ldw/synth.hpp"
#include "ldw/eval.hpp"
