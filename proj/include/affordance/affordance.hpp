#pragma once

#include "affordance/types.hpp"
#include "affordance/ahm.hpp"
#include "affordance/image.hpp"
#include "affordance/record.hpp"
#include "affordance/heatmap.hpp"
#include "affordance/metrics.hpp"
#include "affordance/losses.hpp"
#include "affordance/geometry.hpp"
#include "affordance/annotation.hpp"
#include "affordance/config.hpp"
#include "affordance/synthetic.hpp"
#include "affordance/harness.hpp"
#include "affordance/review.hpp"
