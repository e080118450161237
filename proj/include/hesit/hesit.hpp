// Umbrella header for the HESIT workbench.
#pragma once

#include "hesit/common.hpp"
#include "hesit/config.hpp"
#include "hesit/csvio.hpp"
#include "hesit/curriculum.hpp"
#include "hesit/data.hpp"
#include "hesit/datagen.hpp"
#include "hesit/influence.hpp"
#include "hesit/manifest.hpp"
#include "hesit/model.hpp"
#include "hesit/selection.hpp"
#include "hesit/stats.hpp"
#include "hesit/train.hpp"
