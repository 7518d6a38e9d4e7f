#pragma once

#include "seeker/embedding_store.hpp"
#include "seeker/preference_model.hpp"
#include "seeker/random.hpp"
#include "seeker/sampler.hpp"
#include "seeker/session.hpp"
#include "seeker/sim_harness.hpp"
