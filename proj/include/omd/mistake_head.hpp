#pragma once

#include <vector>

#include "omd/nn.hpp"

namespace omd {

// Numerically stable logistic; sign-split so large |x| never overflows.
double sigmoid(double x);

enum class Aggregator { Max, Mean };

struct MistakeLogits {
    std::vector<double> m;  // per-query logits, length t_q
    double aggregated_logit = 0.0;
    double probability = 0.0;
};

struct MistakeHeadCache {
    Mat f;
    int argmax = 0;  // with Max aggregation, the row the gradient routes to
};

// Linear per-query classification layer plus segment-level aggregation.
// Default aggregation is max over the t_q logits; any query detecting a
// mistake marks the segment. Mean is available for ablation.
class MistakeHead {
public:
    MistakeHead(int d2, Aggregator aggregator, ParamStore& store, Rng& rng);

    MistakeLogits classify(const Mat& f, MistakeHeadCache& cache) const;
    MistakeLogits classify(const Mat& f) const;

    // d_logit: gradient w.r.t. the aggregated logit. Returns df (t_q x d2).
    Mat backward(const MistakeHeadCache& cache, double d_logit) const;

    Aggregator aggregator() const { return aggregator_; }

    static constexpr const char* kGroupName = "mistake_head";

private:
    Aggregator aggregator_;
    nn::Linear fc_;  // d2 -> 1
};

}  // namespace omd
