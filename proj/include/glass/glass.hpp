#pragma once

#include "glass/encoders.hpp"
#include "glass/error.hpp"
#include "glass/evaluator.hpp"
#include "glass/forge.hpp"
#include "glass/loss.hpp"
#include "glass/numerics.hpp"
#include "glass/provider.hpp"
#include "glass/trainer.hpp"
#include "glass/version.hpp"
