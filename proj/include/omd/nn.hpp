#pragma once

#include <vector>

#include "omd/mat.hpp"
#include "omd/params.hpp"
#include "omd/rng.hpp"

namespace omd {
namespace nn {

// Layers keep only Param pointers; forward passes write their intermediates
// into explicit cache structs so one layer instance can run any number of
// forwards (per frame, per sample) before the matching backwards run.
// Backward calls accumulate into Param::grad.

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

// Row-wise stable softmax.
Mat softmax_rows(const Mat& s);
// Given P = softmax(S) and dP, returns dS.
Mat softmax_rows_backward(const Mat& p, const Mat& dp);

struct Linear {
    Param* W = nullptr;  // in x out
    Param* b = nullptr;  // 1 x out

    Linear() = default;
    Linear(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng);

    int in_dim() const { return W->value.rows(); }
    int out_dim() const { return W->value.cols(); }

    Mat forward(const Mat& x) const;
    // Needs the forward input; returns dx.
    Mat backward(const Mat& x, const Mat& dy) const;
};

struct LayerNorm {
    Param* gamma = nullptr;  // 1 x d
    Param* beta = nullptr;   // 1 x d
    double eps = 1e-5;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& prefix, int d);

    struct Cache {
        Mat xhat;
        std::vector<double> inv_std;
    };

    Mat forward(const Mat& x, Cache& c) const;
    Mat backward(const Cache& c, const Mat& dy) const;
};

struct MultiHeadAttention {
    Param *wq = nullptr, *bq = nullptr;
    Param *wk = nullptr, *bk = nullptr;
    Param *wv = nullptr, *bv = nullptr;
    Param *wo = nullptr, *bo = nullptr;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& prefix, int dim, int heads,
                       Rng& rng);

    int dim() const { return wq->value.rows(); }

    struct Cache {
        Mat q_in, kv_in;
        Mat Q, K, V;
        std::vector<Mat> P;  // per-head attention, n_q x n_kv
        Mat ctx;
    };

    // q_in: n_q x d, kv_in: n_kv x d. Self-attention passes the same matrix
    // for both. attn_rows, when set, receives the per-head softmax maps.
    Mat forward(const Mat& q_in, const Mat& kv_in, Cache& c,
                std::vector<Mat>* attn_rows = nullptr) const;
    // Accumulates input gradients into dq_in / dkv_in (both pre-sized).
    void backward(const Cache& c, const Mat& dy, Mat& dq_in, Mat& dkv_in) const;
};

struct FeedForward {
    Linear fc1, fc2;  // d -> 4d -> d

    FeedForward() = default;
    FeedForward(ParamStore& store, const std::string& prefix, int dim, Rng& rng);

    struct Cache {
        Mat x, h_pre, h_act;
    };

    Mat forward(const Mat& x, Cache& c) const;
    Mat backward(const Cache& c, const Mat& dy) const;
};

// Pre-norm encoder block: x += attn(LN(x)); x += ffn(LN(x)).
struct TransformerBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ffn;

    TransformerBlock() = default;
    TransformerBlock(ParamStore& store, const std::string& prefix, int dim, int heads,
                     Rng& rng);

    struct Cache {
        LayerNorm::Cache ln1c, ln2c;
        MultiHeadAttention::Cache attnc;
        FeedForward::Cache ffnc;
        Mat ln1_out, x1, ln2_out;
    };

    Mat forward(const Mat& x, Cache& c) const;
    Mat backward(const Cache& c, const Mat& dy) const;
};

// Pre-norm Q-Former block: query states self-attend, cross-attend to a fixed
// memory, then pass through the feed-forward sublayer; residuals around each.
struct QFormerBlock {
    LayerNorm ln_self, ln_cross, ln_ffn;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;

    QFormerBlock() = default;
    QFormerBlock(ParamStore& store, const std::string& prefix, int dim, int heads,
                 Rng& rng);

    struct Cache {
        LayerNorm::Cache lnsc, lncc, lnfc;
        MultiHeadAttention::Cache selfc, crossc;
        FeedForward::Cache ffnc;
        Mat lns_out, x1, lnc_out, x2, lnf_out;
    };

    Mat forward(const Mat& x, const Mat& memory, Cache& c,
                std::vector<Mat>* self_attn_rows = nullptr,
                std::vector<Mat>* cross_attn_rows = nullptr) const;
    // Returns dx; accumulates the memory gradient into dmemory (pre-sized).
    Mat backward(const Cache& c, const Mat& dy, Mat& dmemory) const;
};

void init_trunc_normal(Mat& m, Rng& rng, double stddev = 0.02);

}  // namespace nn
}  // namespace omd
