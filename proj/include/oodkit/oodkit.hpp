#pragma once

#include "oodkit/augment.hpp"
#include "oodkit/ema.hpp"
#include "oodkit/error.hpp"
#include "oodkit/image.hpp"
#include "oodkit/io.hpp"
#include "oodkit/matrix.hpp"
#include "oodkit/metrics.hpp"
#include "oodkit/ood.hpp"
#include "oodkit/trainer.hpp"
#include "oodkit/tta.hpp"
