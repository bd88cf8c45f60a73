#pragma once

#include "mrm/btcore.hpp"
#include "mrm/commands.hpp"
#include "mrm/corpus.hpp"
#include "mrm/evalbench.hpp"
#include "mrm/metaopt.hpp"
#include "mrm/rewardnet.hpp"
#include "mrm/rng.hpp"
#include "mrm/rpo.hpp"
#include "mrm/synthlab.hpp"
#include "mrm/util.hpp"
