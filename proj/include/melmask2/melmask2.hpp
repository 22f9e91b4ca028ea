#pragma once

// Umbrella header for the melmask2 streaming two-stage speech enhancer.

#include "melmask2/audio.hpp"
#include "melmask2/autodiff.hpp"
#include "melmask2/autodiff_nn.hpp"
#include "melmask2/dataset.hpp"
#include "melmask2/errors.hpp"
#include "melmask2/eval.hpp"
#include "melmask2/fft.hpp"
#include "melmask2/kernels.hpp"
#include "melmask2/logging.hpp"
#include "melmask2/losses.hpp"
#include "melmask2/mel.hpp"
#include "melmask2/metrics.hpp"
#include "melmask2/nn.hpp"
#include "melmask2/nn_tape.hpp"
#include "melmask2/optim.hpp"
#include "melmask2/oracle.hpp"
#include "melmask2/pipeline.hpp"
#include "melmask2/stft.hpp"
#include "melmask2/tape_dsp.hpp"
#include "melmask2/tensor.hpp"
#include "melmask2/training.hpp"
#include "melmask2/wav.hpp"
#include "melmask2/weights_io.hpp"
