#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "omd/data_model.hpp"

namespace omd {
namespace metrics {

using Tokens = std::vector<std::string>;

// Lowercase, strip punctuation (non-alphanumeric becomes a separator), split
// on whitespace.
Tokens tokenize(const std::string& text);

// "mistake" is the positive class.
struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;

    long total() const { return tp + fp + tn + fn; }
    void add(Label predicted, Label actual);
};

struct DetectionReport {
    double precision_correct = 0.0;
    double recall_correct = 0.0;
    double precision_mistake = 0.0;
    double recall_mistake = 0.0;
    double f1_macro = 0.0;
    // Ratios that hit 0/0 and were defined as 0.
    std::vector<std::string> zero_division_flags;
};

// Per-class precision/recall and macro-F1 from raw counts. Any 0/0 ratio is
// defined as 0 and flagged.
DetectionReport detection_report(const ConfusionCounts& counts);

// Macro-F1 from already-computed per-class precision/recall values; shares
// the F1 combination with detection_report. Used to cross-check published
// per-class rows against their reported F1.
double macro_f1_from_rates(double precision_correct, double recall_correct,
                           double precision_mistake, double recall_mistake);

// BLEU-4: geometric mean of clipped n-gram precisions (n = 1..4) with
// brevity penalty; any zero n-gram precision is replaced by
// 1 / (2 * candidate_length). Empty candidate scores 0.
double bleu(const Tokens& candidate, const std::vector<Tokens>& references);

// LCS-based F-measure with beta = 1; 0 when the LCS is empty.
double rouge_l(const Tokens& candidate, const Tokens& reference);

struct CiderInput {
    Tokens candidate;
    std::vector<Tokens> references;
};

// CIDEr-D over a corpus: TF-IDF n-gram cosine per n = 1..4 with count
// clipping and a Gaussian length penalty (sigma = 6), averaged over n and
// references, scaled by 10, then averaged over items. The IDF comes from the
// reference corpus, which must contain at least two items.
double cider_d(const std::vector<CiderInput>& corpus);
// Plain CIDEr (no clipping, no length penalty), kept behind this entry point.
double cider(const std::vector<CiderInput>& corpus);

struct CaptionScore {
    double bleu = 0.0;
    double rouge_l = 0.0;
    std::optional<double> cider;  // absent when the corpus is degenerate
    int num_items = 0;
};

struct EvaluationReport {
    ConfusionCounts counts;
    DetectionReport detection;
    std::optional<CaptionScore> caption;  // absent when nothing to score
    long evaluated_segments = 0;
};

// Pairs predictions with annotation segments ([start, end) containment),
// scores detection over every segment that received at least one prediction
// (a segment counts as predicted-mistake when any of its predictions fired),
// and scores captions over segments where both sides are mistakes with
// explanations (candidate = first fired prediction's text).
EvaluationReport evaluate_run(const std::vector<PredictionRecord>& predictions,
                              const std::vector<AnnotationRecord>& annotations);

}  // namespace metrics
}  // namespace omd
