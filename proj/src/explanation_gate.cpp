#include "omd/explanation_gate.hpp"

#include <httplib.h>

#include <cinttypes>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

namespace omd {

using nlohmann::json;

void GateConfig::validate() const {
    require(tau > 0.0 && tau < 1.0, "gate.tau must lie strictly inside (0, 1)");
}

int gate(double probability, double tau) {
    require(probability >= 0.0 && probability <= 1.0,
            "gate: probability " + std::to_string(probability) + " outside [0, 1]");
    require(tau > 0.0 && tau < 1.0, "gate: tau " + std::to_string(tau) + " outside (0, 1)");
    return probability >= tau ? 1 : 0;
}

std::string render_prompt(const std::string& prompt_template) {
    std::string out = prompt_template;
    const std::string marker = "<features>";
    auto pos = out.find(marker);
    if (pos != std::string::npos) out.erase(pos, marker.size());
    return out;
}

std::string MockGenerator::generate_impl(const Mat& prefix_embeddings,
                                         const std::string& prompt) {
    std::uint64_t h = fnv1a64(prompt.data(), prompt.size());
    h = fnv1a64(prefix_embeddings.data(), prefix_embeddings.size() * sizeof(double), h);
    int shape[2] = {prefix_embeddings.rows(), prefix_embeddings.cols()};
    h = fnv1a64(shape, sizeof(shape), h);
    char sig[32];
    std::snprintf(sig, sizeof(sig), "%016" PRIx64, h);
    return "a mistake was detected in the current step; review the step before continuing "
           "[sig=" +
           std::string(sig) + "]";
}

namespace {
// Splits "http://host:port" (path ignored); plain host[:port] also accepted.
void parse_endpoint(const std::string& endpoint, std::string& host, int& port) {
    std::string rest = endpoint;
    const std::string scheme = "http://";
    if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
    auto slash = rest.find('/');
    if (slash != std::string::npos) rest = rest.substr(0, slash);
    auto colon = rest.find(':');
    if (colon == std::string::npos) {
        host = rest;
        port = 80;
    } else {
        host = rest.substr(0, colon);
        port = std::stoi(rest.substr(colon + 1));
    }
    if (host.empty()) throw ValidationError("generator endpoint has no host: " + endpoint);
}
}  // namespace

ExternalGenerator::ExternalGenerator(std::string endpoint, int d_llm, double timeout_seconds,
                                     int retries)
    : d_llm_(d_llm), timeout_seconds_(timeout_seconds), retries_(retries) {
    parse_endpoint(endpoint, host_, port_);
}

std::string ExternalGenerator::generate_impl(const Mat& prefix_embeddings,
                                             const std::string& prompt) {
    json req;
    req["prompt"] = prompt;
    req["features"]["shape"] = {prefix_embeddings.rows(), prefix_embeddings.cols()};
    req["features"]["data_b64"] =
        base64_encode(reinterpret_cast<const unsigned char*>(prefix_embeddings.data()),
                      prefix_embeddings.size() * sizeof(double));
    const std::string body = req.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= retries_; ++attempt) {
        httplib::Client client(host_, port_);
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<long>(timeout_seconds_ * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<long>(timeout_seconds_ * 1000)));
        auto res = client.Post("/generate", body, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "server returned status " + std::to_string(res->status);
            continue;
        }
        try {
            json rsp = json::parse(res->body);
            return rsp.at("text").get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("bad response body: ") + e.what();
        }
    }
    throw std::runtime_error("external generator: " + last_error);
}

FeatureProjection::FeatureProjection(int d2, int d_llm, ParamStore& store, Rng& rng)
    : fc_(store, std::string(kGroupName) + ".fc", d2, d_llm, rng) {
    require(d_llm >= 1, "projection.d_llm must be >= 1");
}

Mat FeatureProjection::project(const Mat& f) const {
    if (f.cols() != fc_.in_dim())
        throw ShapeError("projection: feature width " + std::to_string(f.cols()) +
                         " does not match d2 " + std::to_string(fc_.in_dim()));
    return fc_.forward(f);
}

Mat FeatureProjection::backward(const Mat& f, const Mat& dp) const {
    return fc_.backward(f, dp);
}

ExplanationResult explain(const GateConfig& config, const FeatureProjection& projection,
                          GeneratorClient& generator, const Mat& f, double probability) {
    config.validate();
    ExplanationResult result;
    result.probability = probability;
    if (gate(probability, config.tau) == 0) {
        result.fired = false;
        return result;
    }
    result.fired = true;
    if (generator.embedding_width() != projection.d_llm())
        throw ValidationError("generator embedding width " +
                              std::to_string(generator.embedding_width()) +
                              " does not match projection d_llm " +
                              std::to_string(projection.d_llm()));
    Mat projected = projection.project(f);
    const std::string prompt = render_prompt(config.prompt_template);
    try {
        result.explanation = generator.generate(projected, prompt);
    } catch (const std::exception& e) {
        result.generator_error = e.what();
    }
    return result;
}

namespace {
const char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        unsigned int v = data[i] << 16;
        if (i + 1 < len) v |= data[i + 1] << 8;
        if (i + 2 < len) v |= data[i + 2];
        out.push_back(kB64Chars[(v >> 18) & 0x3f]);
        out.push_back(kB64Chars[(v >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? kB64Chars[(v >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? kB64Chars[v & 0x3f] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<unsigned char> out;
    int buffer = 0, bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        int v = value_of(c);
        if (v < 0) throw ParseError("base64: invalid character");
        buffer = (buffer << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((buffer >> bits) & 0xff));
        }
    }
    return out;
}

}  // namespace omd
