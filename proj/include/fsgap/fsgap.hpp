#pragma once

#include "fsgap/cli.hpp"
#include "fsgap/error.hpp"
#include "fsgap/features.hpp"
#include "fsgap/fewshot.hpp"
#include "fsgap/nn.hpp"
#include "fsgap/ot.hpp"
#include "fsgap/rng.hpp"
#include "fsgap/synth.hpp"
