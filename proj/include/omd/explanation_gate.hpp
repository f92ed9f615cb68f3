#pragma once

#include <memory>
#include <optional>
#include <string>

#include "omd/nn.hpp"

namespace omd {

struct GateConfig {
    double tau = 0.5;
    std::string prompt_template =
        "You see features of a task recording in which a mistake was detected. "
        "Explain the mistake.";

    void validate() const;
};

// Threshold gate: 1 iff probability >= tau. The comparison is closed at the
// threshold.
int gate(double probability, double tau);

// Replaces the optional "<features>" marker; projected feature embeddings are
// always passed to the generator as a prefix, ahead of the prompt tokens.
std::string render_prompt(const std::string& prompt_template);

// Pluggable explanation generator. generate() must be deterministic for
// identical inputs; the base class counts calls so gate behavior is
// observable.
class GeneratorClient {
public:
    virtual ~GeneratorClient() = default;

    std::string generate(const Mat& prefix_embeddings, const std::string& prompt) {
        ++calls_;
        return generate_impl(prefix_embeddings, prompt);
    }

    virtual int embedding_width() const = 0;
    long call_count() const { return calls_; }

protected:
    virtual std::string generate_impl(const Mat& prefix_embeddings,
                                      const std::string& prompt) = 0;

private:
    long calls_ = 0;
};

// Deterministic stand-in for a multimodal LLM: emits a fixed template with a
// signature hashed from the prompt and the projected feature bytes.
class MockGenerator : public GeneratorClient {
public:
    explicit MockGenerator(int d_llm) : d_llm_(d_llm) {}
    int embedding_width() const override { return d_llm_; }

protected:
    std::string generate_impl(const Mat& prefix_embeddings,
                              const std::string& prompt) override;

private:
    int d_llm_;
};

// HTTP JSON client for an external generator server.
// Request:  POST <endpoint>/generate
//           {"prompt": str,
//            "features": {"shape": [rows, cols], "data_b64": str}}
//           data_b64 holds row-major little-endian float64 values.
// Response: {"text": str}
class ExternalGenerator : public GeneratorClient {
public:
    ExternalGenerator(std::string endpoint, int d_llm, double timeout_seconds = 10.0,
                      int retries = 2);
    int embedding_width() const override { return d_llm_; }

protected:
    std::string generate_impl(const Mat& prefix_embeddings,
                              const std::string& prompt) override;

private:
    std::string host_;
    int port_ = 80;
    int d_llm_;
    double timeout_seconds_;
    int retries_;
};

struct ExplanationResult {
    bool fired = false;
    double probability = 0.0;
    std::optional<std::string> explanation;
    std::optional<std::string> generator_error;
};

// Linear map from Video Q-Former space (d2) into the generator embedding
// space (d_llm).
class FeatureProjection {
public:
    FeatureProjection(int d2, int d_llm, ParamStore& store, Rng& rng);

    Mat project(const Mat& f) const;
    // dp: t_q x d_llm. Returns df and accumulates parameter gradients.
    Mat backward(const Mat& f, const Mat& dp) const;

    int d_llm() const { return fc_.out_dim(); }
    int d2() const { return fc_.in_dim(); }

    static constexpr const char* kGroupName = "projection";

private:
    nn::Linear fc_;
};

// Runs the Eq.-style gate for one segment: below tau nothing is generated
// (the client is never called); at or above tau the projected features and
// rendered prompt go to the generator. Generator failures are reported in
// the result without disturbing detection output.
ExplanationResult explain(const GateConfig& config, const FeatureProjection& projection,
                          GeneratorClient& generator, const Mat& f, double probability);

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace omd
