#include "omd/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

namespace omd {
namespace metrics {

Tokens tokenize(const std::string& text) {
    Tokens out;
    std::string cur;
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void ConfusionCounts::add(Label predicted, Label actual) {
    if (actual == Label::Mistake)
        (predicted == Label::Mistake ? tp : fn) += 1;
    else
        (predicted == Label::Mistake ? fp : tn) += 1;
}

namespace {
double ratio(long num, long den, const char* name, std::vector<std::string>& flags) {
    if (den == 0) {
        flags.push_back(name);
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

double f1(double p, double r) {
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}
}  // namespace

DetectionReport detection_report(const ConfusionCounts& counts) {
    if (counts.total() == 0) throw ValidationError("detection_report: no evaluated segments");
    DetectionReport rep;
    rep.precision_mistake = ratio(counts.tp, counts.tp + counts.fp, "precision_mistake",
                                  rep.zero_division_flags);
    rep.recall_mistake =
        ratio(counts.tp, counts.tp + counts.fn, "recall_mistake", rep.zero_division_flags);
    rep.precision_correct = ratio(counts.tn, counts.tn + counts.fn, "precision_correct",
                                  rep.zero_division_flags);
    rep.recall_correct =
        ratio(counts.tn, counts.tn + counts.fp, "recall_correct", rep.zero_division_flags);
    rep.f1_macro = 0.5 * (f1(rep.precision_correct, rep.recall_correct) +
                          f1(rep.precision_mistake, rep.recall_mistake));
    return rep;
}

double macro_f1_from_rates(double precision_correct, double recall_correct,
                           double precision_mistake, double recall_mistake) {
    return 0.5 * (f1(precision_correct, recall_correct) +
                  f1(precision_mistake, recall_mistake));
}

namespace {
using NgramCounts = std::unordered_map<std::string, long>;

std::string join_gram(const Tokens& tokens, std::size_t start, int n) {
    std::string g = tokens[start];
    for (int k = 1; k < n; ++k) {
        g.push_back(' ');
        g += tokens[start + k];
    }
    return g;
}

NgramCounts ngram_counts(const Tokens& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) >= n)
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) counts[join_gram(tokens, i, n)] += 1;
    return counts;
}
}  // namespace

double bleu(const Tokens& candidate, const std::vector<Tokens>& references) {
    require(!references.empty(), "bleu: at least one reference required");
    if (candidate.empty()) return 0.0;
    const long c_len = static_cast<long>(candidate.size());

    // Closest reference length; ties resolve toward the shorter reference.
    long r_len = static_cast<long>(references[0].size());
    for (const auto& ref : references) {
        const long len = static_cast<long>(ref.size());
        const long best_diff = std::labs(r_len - c_len);
        const long diff = std::labs(len - c_len);
        if (diff < best_diff || (diff == best_diff && len < r_len)) r_len = len;
    }

    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        NgramCounts cand = ngram_counts(candidate, n);
        NgramCounts max_ref;
        for (const auto& ref : references)
            for (const auto& [gram, cnt] : ngram_counts(ref, n))
                max_ref[gram] = std::max(max_ref[gram], cnt);
        long clipped = 0, total = 0;
        for (const auto& [gram, cnt] : cand) {
            total += cnt;
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) clipped += std::min(cnt, it->second);
        }
        double p = (total > 0) ? static_cast<double>(clipped) / total : 0.0;
        if (p == 0.0) p = 1.0 / (2.0 * c_len);
        log_sum += std::log(p);
    }
    const double brevity =
        (c_len >= r_len) ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / c_len);
    return brevity * std::exp(log_sum / 4.0);
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const std::size_t nc = candidate.size(), nr = reference.size();
    std::vector<std::vector<long>> dp(nc + 1, std::vector<long>(nr + 1, 0));
    for (std::size_t i = 1; i <= nc; ++i)
        for (std::size_t j = 1; j <= nr; ++j)
            dp[i][j] = (candidate[i - 1] == reference[j - 1])
                           ? dp[i - 1][j - 1] + 1
                           : std::max(dp[i - 1][j], dp[i][j - 1]);
    const long lcs = dp[nc][nr];
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / nc;
    const double r = static_cast<double>(lcs) / nr;
    return 2.0 * p * r / (p + r);
}

namespace {
constexpr int kCiderN = 4;
constexpr double kCiderSigma = 6.0;

struct TfidfVec {
    std::array<std::unordered_map<std::string, double>, kCiderN> v;
    std::array<double, kCiderN> norm{};
    long length = 0;
};

TfidfVec tfidf_vector(const Tokens& tokens, const std::unordered_map<std::string, long>& df,
                      double log_num_items) {
    TfidfVec out;
    out.length = static_cast<long>(tokens.size());
    for (int n = 1; n <= kCiderN; ++n) {
        for (const auto& [gram, cnt] : ngram_counts(tokens, n)) {
            auto it = df.find(gram);
            const double d = it == df.end() ? 0.0 : static_cast<double>(it->second);
            const double idf = log_num_items - std::log(std::max(1.0, d));
            out.v[n - 1][gram] = cnt * idf;
        }
        double s = 0.0;
        for (const auto& [gram, w] : out.v[n - 1]) s += w * w;
        out.norm[n - 1] = std::sqrt(s);
    }
    return out;
}

double cider_impl(const std::vector<CiderInput>& corpus, bool d_variant) {
    require(corpus.size() >= 2,
            "cider: corpus must contain at least two items (IDF is degenerate otherwise)");
    for (const auto& item : corpus)
        require(!item.references.empty(), "cider: every item needs at least one reference");

    // Document frequency: number of items whose reference set contains the
    // n-gram.
    std::unordered_map<std::string, long> df;
    for (const auto& item : corpus) {
        std::set<std::string> grams;
        for (const auto& ref : item.references)
            for (int n = 1; n <= kCiderN; ++n)
                for (const auto& [gram, cnt] : ngram_counts(ref, n)) grams.insert(gram);
        for (const auto& gram : grams) df[gram] += 1;
    }
    const double log_num_items = std::log(static_cast<double>(corpus.size()));

    double total = 0.0;
    for (const auto& item : corpus) {
        TfidfVec cand = tfidf_vector(item.candidate, df, log_num_items);
        std::array<double, kCiderN> acc{};
        for (const auto& ref : item.references) {
            TfidfVec rv = tfidf_vector(ref, df, log_num_items);
            const double delta = static_cast<double>(cand.length - rv.length);
            for (int n = 0; n < kCiderN; ++n) {
                double dot = 0.0;
                for (const auto& [gram, w] : cand.v[n]) {
                    auto it = rv.v[n].find(gram);
                    if (it == rv.v[n].end()) continue;
                    const double cw = d_variant ? std::min(w, it->second) : w;
                    dot += cw * it->second;
                }
                double sim = 0.0;
                if (cand.norm[n] > 0.0 && rv.norm[n] > 0.0)
                    sim = dot / (cand.norm[n] * rv.norm[n]);
                if (d_variant)
                    sim *= std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
                acc[n] += sim;
            }
        }
        double item_score = 0.0;
        for (int n = 0; n < kCiderN; ++n) item_score += acc[n] / item.references.size();
        item_score = item_score / kCiderN * 10.0;
        total += item_score;
    }
    return total / corpus.size();
}
}  // namespace

double cider_d(const std::vector<CiderInput>& corpus) { return cider_impl(corpus, true); }
double cider(const std::vector<CiderInput>& corpus) { return cider_impl(corpus, false); }

namespace {
struct SegmentState {
    const AnnotationRecord* annotation = nullptr;
    bool any_prediction = false;
    bool any_fired = false;
    double first_fired_time = 0.0;
    std::string first_fired_explanation;
};
}  // namespace

EvaluationReport evaluate_run(const std::vector<PredictionRecord>& predictions,
                              const std::vector<AnnotationRecord>& annotations) {
    require(!predictions.empty(), "evaluate_run: no predictions");
    require(!annotations.empty(), "evaluate_run: no annotations");

    // (video_id, segment_start) ordered segments per video.
    std::map<std::string, std::vector<SegmentState>> segments;
    for (const auto& a : annotations) {
        a.validate();
        SegmentState s;
        s.annotation = &a;
        segments[a.video_id].push_back(s);
    }
    for (auto& [vid, segs] : segments)
        std::sort(segs.begin(), segs.end(), [](const SegmentState& x, const SegmentState& y) {
            return x.annotation->segment_start < y.annotation->segment_start;
        });

    std::vector<std::string> unmatched;
    for (const auto& p : predictions) {
        p.validate();
        SegmentState* hit = nullptr;
        auto it = segments.find(p.video_id);
        if (it != segments.end()) {
            for (auto& s : it->second) {
                // Closed-open interval; boundary timesteps land in the later
                // segment's start, i.e. the earlier [start, end) that
                // contains them.
                if (p.timestep >= s.annotation->segment_start &&
                    p.timestep < s.annotation->segment_end) {
                    hit = &s;
                    break;
                }
            }
        }
        if (!hit) {
            unmatched.push_back(p.video_id + " @ " + std::to_string(p.timestep));
            continue;
        }
        hit->any_prediction = true;
        if (p.label == Label::Mistake) {
            if (!hit->any_fired || p.timestep < hit->first_fired_time) {
                hit->first_fired_time = p.timestep;
                hit->first_fired_explanation = p.explanation.value_or("");
            }
            hit->any_fired = true;
        }
    }
    if (!unmatched.empty()) {
        std::string msg = "evaluate_run: predictions outside every annotation segment:";
        for (const auto& u : unmatched) msg += " [" + u + "]";
        throw ValidationError(msg);
    }

    EvaluationReport report;
    std::vector<CiderInput> caption_corpus;
    double bleu_sum = 0.0, rouge_sum = 0.0;
    for (const auto& [vid, segs] : segments) {
        for (const auto& s : segs) {
            if (!s.any_prediction) continue;
            report.evaluated_segments += 1;
            const Label predicted = s.any_fired ? Label::Mistake : Label::Correct;
            report.counts.add(predicted, s.annotation->label);

            if (s.annotation->label == Label::Mistake && predicted == Label::Mistake &&
                !s.annotation->explanation.empty() && !s.first_fired_explanation.empty()) {
                CiderInput item;
                item.candidate = tokenize(s.first_fired_explanation);
                item.references = {tokenize(s.annotation->explanation)};
                bleu_sum += bleu(item.candidate, item.references);
                rouge_sum += rouge_l(item.candidate, item.references[0]);
                caption_corpus.push_back(std::move(item));
            }
        }
    }

    report.detection = detection_report(report.counts);
    if (!caption_corpus.empty()) {
        CaptionScore cs;
        cs.num_items = static_cast<int>(caption_corpus.size());
        cs.bleu = bleu_sum / cs.num_items;
        cs.rouge_l = rouge_sum / cs.num_items;
        if (caption_corpus.size() >= 2) cs.cider = cider_d(caption_corpus);
        report.caption = cs;
    }
    return report;
}

}  // namespace metrics
}  // namespace omd
