// Umbrella header.
#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "core.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "place_field.hpp"
#include "replay.hpp"
#include "rnn.hpp"
#include "score_oracle.hpp"
#include "stochastic_processes.hpp"
#include "svg.hpp"
#include "tasks.hpp"
#include "trainer.hpp"
#include "trajectory_io.hpp"
#include "verify.hpp"
