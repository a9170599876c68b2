#pragma once

// Umbrella header for the audio-driven video diffusion toolkit.

#include "avdt/aem.hpp"
#include "avdt/attention.hpp"
#include "avdt/audio_features.hpp"
#include "avdt/autodiff.hpp"
#include "avdt/backbone.hpp"
#include "avdt/config.hpp"
#include "avdt/container.hpp"
#include "avdt/dataset.hpp"
#include "avdt/eval.hpp"
#include "avdt/faa.hpp"
#include "avdt/flowmatch.hpp"
#include "avdt/fusion.hpp"
#include "avdt/generate.hpp"
#include "avdt/harness.hpp"
#include "avdt/optim.hpp"
#include "avdt/pngdump.hpp"
#include "avdt/rng.hpp"
#include "avdt/rope.hpp"
#include "avdt/synth.hpp"
#include "avdt/tensor.hpp"
#include "avdt/tokenizer.hpp"
#include "avdt/vae.hpp"
#include "avdt/wav.hpp"
