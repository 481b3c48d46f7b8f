#pragma once

#include "opera/audio.hpp"
#include "opera/duration_model.hpp"
#include "opera/duration_table.hpp"
#include "opera/error.hpp"
#include "opera/eval_harness.hpp"
#include "opera/frames.hpp"
#include "opera/hmm.hpp"
#include "opera/musicxml.hpp"
#include "opera/note_transcriber.hpp"
#include "opera/pitch.hpp"
#include "opera/pitch_tracker.hpp"
#include "opera/score_io.hpp"
#include "opera/svg_plot.hpp"
#include "opera/yin.hpp"
