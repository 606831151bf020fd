#pragma once

#include "lfa/adam_pso.hpp"
#include "lfa/convergence.hpp"
#include "lfa/errors.hpp"
#include "lfa/experiment.hpp"
#include "lfa/gradient.hpp"
#include "lfa/model.hpp"
#include "lfa/parallel.hpp"
#include "lfa/pso.hpp"
#include "lfa/random.hpp"
#include "lfa/ranking.hpp"
#include "lfa/ratings.hpp"
#include "lfa/refine.hpp"
#include "lfa/synth.hpp"
