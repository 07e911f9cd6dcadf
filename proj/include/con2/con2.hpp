// Umbrella header.

#pragma once

#include "con2/assumptions.hpp"
#include "con2/config.hpp"
#include "con2/content_aug.hpp"
#include "con2/dataset.hpp"
#include "con2/evaluation.hpp"
#include "con2/image.hpp"
#include "con2/image_folder.hpp"
#include "con2/linalg.hpp"
#include "con2/losses.hpp"
#include "con2/model.hpp"
#include "con2/nn.hpp"
#include "con2/rng.hpp"
#include "con2/scoring.hpp"
#include "con2/trainer.hpp"
#include "con2/util.hpp"
