// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "segalign/alignment.hpp"
#include "segalign/dataset.hpp"
#include "segalign/error.hpp"
#include "segalign/masked_decoding.hpp"
#include "segalign/metrics.hpp"
#include "segalign/motion.hpp"
#include "segalign/rng.hpp"
#include "segalign/rvq.hpp"
#include "segalign/segmentation.hpp"
#include "segalign/synth_corpus.hpp"
#include "segalign/text_segments.hpp"
#include "segalign/types.hpp"
