#pragma once

// Umbrella header for the whole pipeline: cepstral front end, attention
// network with training, communication degradation and EER evaluation.

#include "mgaa/audio.hpp"
#include "mgaa/cepstrum.hpp"
#include "mgaa/checkpoint.hpp"
#include "mgaa/conditions.hpp"
#include "mgaa/degrade.hpp"
#include "mgaa/eer.hpp"
#include "mgaa/embedding.hpp"
#include "mgaa/features.hpp"
#include "mgaa/filterbank.hpp"
#include "mgaa/manifest.hpp"
#include "mgaa/model.hpp"
#include "mgaa/ops.hpp"
#include "mgaa/optimizer.hpp"
#include "mgaa/separability.hpp"
#include "mgaa/spectrogram.hpp"
#include "mgaa/tape.hpp"
#include "mgaa/tensor.hpp"
#include "mgaa/trainer.hpp"
