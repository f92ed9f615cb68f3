#include "omd/mistake_head.hpp"

#include <cmath>

namespace omd {

double sigmoid(double x) {
    if (std::isnan(x)) throw ValidationError("sigmoid: NaN input");
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

MistakeHead::MistakeHead(int d2, Aggregator aggregator, ParamStore& store, Rng& rng)
    : aggregator_(aggregator),
      fc_(store, std::string(kGroupName) + ".fc", d2, 1, rng) {}

MistakeLogits MistakeHead::classify(const Mat& f, MistakeHeadCache& cache) const {
    if (f.cols() != fc_.in_dim())
        throw ShapeError("mistake_head: feature width " + std::to_string(f.cols()) +
                         " does not match classifier input " + std::to_string(fc_.in_dim()));
    cache.f = f;
    Mat logits = fc_.forward(f);

    MistakeLogits out;
    out.m.resize(f.rows());
    for (int i = 0; i < f.rows(); ++i) out.m[i] = logits(i, 0);

    if (aggregator_ == Aggregator::Max) {
        cache.argmax = 0;
        for (int i = 1; i < f.rows(); ++i)
            if (out.m[i] > out.m[cache.argmax]) cache.argmax = i;
        out.aggregated_logit = out.m[cache.argmax];
    } else {
        double s = 0.0;
        for (double mi : out.m) s += mi;
        out.aggregated_logit = s / f.rows();
    }
    out.probability = sigmoid(out.aggregated_logit);
    return out;
}

MistakeLogits MistakeHead::classify(const Mat& f) const {
    MistakeHeadCache cache;
    return classify(f, cache);
}

Mat MistakeHead::backward(const MistakeHeadCache& cache, double d_logit) const {
    Mat dlogits(cache.f.rows(), 1);
    if (aggregator_ == Aggregator::Max) {
        dlogits(cache.argmax, 0) = d_logit;
    } else {
        for (int i = 0; i < cache.f.rows(); ++i) dlogits(i, 0) = d_logit / cache.f.rows();
    }
    return fc_.backward(cache.f, dlogits);
}

}  // namespace omd
