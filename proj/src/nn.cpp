#include "morphseq/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace morphseq {

Tape::Id gru_step(Tape& t, Tape::Id x, Tape::Id h_prev, const GruNodes& w) {
    const Tape::Id gate_in = t.concat(h_prev, x);
    const Tape::Id z = t.sigmoid(t.add(t.matvec(w.w_update, gate_in, "W_z"), w.b_update));
    const Tape::Id r = t.sigmoid(t.add(t.matvec(w.w_reset, gate_in, "W_r"), w.b_reset));
    const Tape::Id cand_in = t.concat(t.mul(r, h_prev), x);
    const Tape::Id cand = t.tanh(t.add(t.matvec(w.w_cand, cand_in, "W_c"), w.b_cand));
    // (1-z) .* h_prev + z .* cand
    return t.add(t.mul(t.affine(z, -1.0, 1.0), h_prev), t.mul(z, cand));
}

Tape::Id dropout(Tape& t, Tape::Id x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) {
        throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    const Tensor& v = t.value(x);
    Tensor mask = Tensor::zeros(v.shape);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask.data) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    return t.mul_mask(x, mask);
}

double finite_diff_check(ParamStore& params, const LossBuilder& build, double h) {
    // analytic gradients
    params.zero_grads();
    {
        Tape tape;
        const Tape::Id loss = build(tape);
        tape.backward(loss);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto& e : params.entries()) {
        analytic.push_back(e.grad.empty() ? Tensor::zeros(e.value.shape) : e.grad);
    }

    const auto eval = [&]() {
        Tape tape;
        const Tape::Id loss = build(tape);
        return tape.value(loss)[0];
    };

    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.entries().size(); ++p) {
        Tensor& value = params.entries()[p].value;
        for (std::size_t i = 0; i < value.numel(); ++i) {
            const double saved = value[i];
            value[i] = saved + h;
            const double up = eval();
            value[i] = saved - h;
            const double down = eval();
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[p][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace morphseq
