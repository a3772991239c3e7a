#pragma once

#include <functional>

#include "morphseq/param_store.hpp"
#include "morphseq/rng.hpp"
#include "morphseq/tape.hpp"

namespace morphseq {

// One GRU cell's weights as tape nodes. The update/reset gates read the
// concatenation [h_prev; x]; the candidate reads [r .* h_prev; x].
struct GruNodes {
    Tape::Id w_update, w_reset, w_cand;
    Tape::Id b_update, b_reset, b_cand;
};

// h = (1-z) .* h_prev + z .* tanh(W_c [r .* h_prev; x] + b_c)
// with z and r sigmoid gates over [h_prev; x].
Tape::Id gru_step(Tape& t, Tape::Id x, Tape::Id h_prev, const GruNodes& w);

// Inverted dropout: in training, zero each element with probability `rate`
// and scale survivors by 1/(1-rate); identity at inference. rate must be
// in [0, 1).
Tape::Id dropout(Tape& t, Tape::Id x, double rate, Rng& rng, bool training);

// Builds the loss on a fresh tape; used by finite_diff_check. Must be
// deterministic (dropout disabled).
using LossBuilder = std::function<Tape::Id(Tape&)>;

// Central-difference check of reverse-mode gradients over every parameter
// coordinate. Returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(ParamStore& params, const LossBuilder& build, double h = 1e-5);

}  // namespace morphseq
