#pragma once

// Umbrella header.

#include "ttv/error.hpp"
#include "ttv/roll.hpp"
#include "ttv/spiral.hpp"
#include "ttv/midi.hpp"
#include "ttv/corpus.hpp"
#include "ttv/dataset.hpp"
#include "ttv/vae.hpp"
#include "ttv/train.hpp"
#include "ttv/checkpoint.hpp"
#include "ttv/gradcheck.hpp"
#include "ttv/latent.hpp"
#include "ttv/eval.hpp"
#include "ttv/generate.hpp"
#include "ttv/report.hpp"
