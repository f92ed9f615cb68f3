#pragma once

// Independent straight-line reference computations used to check the library
// implementations. Everything here is written directly from the documented
// architecture and metric definitions with plain loops; none of it calls the
// code under test beyond reading parameter arrays by name.

#include <map>
#include <string>
#include <vector>

#include "omd/mat.hpp"
#include "omd/params.hpp"
#include "omd/video_qformer.hpp"
#include "omd/visual_encoder.hpp"

namespace oracle {

using omd::Mat;

// Single-layer single-head Video Q-Former forward.
Mat video_qformer_forward(const omd::ParamStore& store, const omd::VideoQFormerConfig& config,
                          const Mat& v);

// Single-layer single-head ViT + spatial Q-Former frame encoding.
Mat vit_encode_frame(const omd::ParamStore& store, const omd::EncoderConfig& config,
                     const omd::Image& image);

// Metric references.
double bleu(const std::vector<std::string>& candidate,
            const std::vector<std::vector<std::string>>& references);
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

struct CiderItem {
    std::vector<std::string> candidate;
    std::vector<std::vector<std::string>> references;
};
double cider_d(const std::vector<CiderItem>& corpus);

}  // namespace oracle
