#pragma once

// Long-term object tracking engine: one-shot detection with dynamically
// generated correlation convolutions, multi-object association over re-id,
// motion, and position clues, a synthetic sequence simulator, and the
// long-term evaluation metrics.

#include "longtrack/assoc.hpp"
#include "longtrack/common.hpp"
#include "longtrack/config.hpp"
#include "longtrack/dethead.hpp"
#include "longtrack/dynconv.hpp"
#include "longtrack/featmap.hpp"
#include "longtrack/geometry.hpp"
#include "longtrack/losses.hpp"
#include "longtrack/metrics.hpp"
#include "longtrack/pipeline.hpp"
#include "longtrack/sim.hpp"
