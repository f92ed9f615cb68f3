#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <nlohmann/json.hpp>

#include "omd/config.hpp"
#include "omd/metrics.hpp"
#include "omd/timeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Dataset roots carry a dataset.json echo; its fps wins over the config so
// frame timestamps line up with the annotations.
double resolve_fps(const std::string& frames_path, double config_fps) {
    for (const fs::path candidate :
         {fs::path(frames_path) / "dataset.json", fs::path(frames_path).parent_path() / "dataset.json"}) {
        std::ifstream in(candidate);
        if (!in) continue;
        try {
            json j = json::parse(in);
            if (j.contains("fps")) return j.at("fps").get<double>();
        } catch (...) {
        }
    }
    return config_fps;
}

bool has_png_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) return false;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") return true;
    return false;
}

std::unique_ptr<omd::GeneratorClient> make_generator(const omd::RunConfig& config) {
    if (config.generator.kind == omd::GeneratorKind::Mock)
        return std::make_unique<omd::MockGenerator>(config.model.d_llm);
    return std::make_unique<omd::ExternalGenerator>(config.generator.endpoint,
                                                    config.model.d_llm,
                                                    config.generator.timeout_seconds,
                                                    config.generator.retries);
}

std::vector<omd::AnnotationRecord> read_annotations_any(const std::string& path) {
    if (fs::is_directory(path)) {
        const fs::path root_file = fs::path(path) / "annotations.jsonl";
        if (fs::exists(root_file)) return omd::read_annotations(root_file.string());
        std::vector<std::string> video_files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_directory() && fs::exists(e.path() / "annotations.jsonl"))
                video_files.push_back((e.path() / "annotations.jsonl").string());
        std::sort(video_files.begin(), video_files.end());
        if (video_files.empty())
            throw omd::ValidationError("no annotations.jsonl under " + path);
        std::vector<omd::AnnotationRecord> all;
        for (const auto& f : video_files) {
            auto part = omd::read_annotations(f);
            all.insert(all.end(), part.begin(), part.end());
        }
        return all;
    }
    return omd::read_annotations(path);
}

void check_checkpoint_compat(const omd::RunConfig& config, const omd::Model& model) {
    const auto& ck = model.config();
    if (config.t_s > ck.video_qformer.max_positions)
        throw omd::ValidationError(
            "config t_s=" + std::to_string(config.t_s) +
            " exceeds checkpoint video_qformer.max_positions=" +
            std::to_string(ck.video_qformer.max_positions));
    if (config.model.d_llm != ck.d_llm)
        throw omd::ValidationError("config projection.d_llm=" +
                                   std::to_string(config.model.d_llm) +
                                   " does not match checkpoint d_llm=" +
                                   std::to_string(ck.d_llm));
}

int cmd_synth_data(const omd::RunConfig& config, const std::string& out_dir) {
    omd::write_synthetic_dataset(config.synth, out_dir);
    std::cout << "wrote " << config.synth.num_videos << " videos ("
              << config.synth.steps_per_task << " segments each) to " << out_dir << "\n";
    return 0;
}

int cmd_train(const omd::RunConfig& config, const std::string& data_dir,
              const std::string& checkpoint_out, std::string log_path) {
    const double fps = resolve_fps(data_dir, config.fps);
    auto samples = omd::load_segment_dataset(data_dir, config.t_s, fps);
    std::cout << "loaded " << samples.size() << " segments from " << data_dir << "\n";

    omd::Model model(config.model, config.seed);
    omd::Trainer trainer(model, config.training);
    auto log = trainer.train(samples);
    model.save_checkpoint(checkpoint_out);
    if (log_path.empty()) log_path = checkpoint_out + ".log.csv";
    omd::write_train_log_csv(log, log_path);

    std::printf("steps=%zu first_loss=%.6f last_loss=%.6f checkpoint=%s\n", log.size(),
                log.empty() ? 0.0 : log.front().loss, log.empty() ? 0.0 : log.back().loss,
                checkpoint_out.c_str());
    return 0;
}

int cmd_detect(const omd::RunConfig& config, const std::string& checkpoint_path,
               const std::string& frames, const std::string& out_path) {
    auto model = omd::Model::load_checkpoint(checkpoint_path);
    check_checkpoint_compat(config, *model);
    auto generator = make_generator(config);

    std::ofstream out(out_path);
    if (!out) throw omd::ValidationError("cannot open for writing: " + out_path);
    long records = 0;
    // Each record is flushed as soon as it exists so downstream consumers
    // see results online.
    auto sink = [&](const omd::PredictionRecord& rec) {
        out << omd::prediction_to_json_line(rec) << "\n";
        out.flush();
        ++records;
    };

    std::unique_ptr<omd::PrecomputedFeatures> precomputed;
    auto run_one = [&](omd::FrameSource& source, const std::string& video_id,
                       const std::string& features_file) {
        precomputed.reset();
        if (config.encoder_kind == "precomputed") {
            if (features_file.empty())
                throw omd::ValidationError(
                    "encoder.kind=precomputed but no features table for " + video_id);
            precomputed = std::make_unique<omd::PrecomputedFeatures>(
                omd::PrecomputedFeatures::load(features_file));
        }
        omd::DetectionPipeline pipeline(*model, config.gate, *generator, video_id, config.t_s,
                                        config.stride, precomputed.get());
        pipeline.run(source, sink);
    };

    if (frames == "-") {
        omd::RawStreamFrameSource source(std::cin);
        run_one(source, config.video_id, config.features_path);
    } else if (has_png_frames(frames)) {
        const double fps = resolve_fps(frames, config.fps);
        omd::DirectoryFrameSource source(frames, fps);
        const fs::path features_file = fs::path(frames) / "features.omdf";
        run_one(source, fs::path(frames).filename().string(),
                fs::exists(features_file) ? features_file.string() : config.features_path);
    } else if (fs::is_directory(frames)) {
        std::vector<std::string> video_dirs;
        for (const auto& e : fs::directory_iterator(frames))
            if (has_png_frames(e.path())) video_dirs.push_back(e.path().string());
        std::sort(video_dirs.begin(), video_dirs.end());
        if (video_dirs.empty())
            throw omd::ValidationError("no video directories with frames under " + frames);
        const double fps = resolve_fps(frames, config.fps);
        for (const auto& vdir : video_dirs) {
            omd::DirectoryFrameSource source(vdir, fps);
            const fs::path features_file = fs::path(vdir) / "features.omdf";
            run_one(source, fs::path(vdir).filename().string(),
                    fs::exists(features_file) ? features_file.string() : config.features_path);
        }
    } else {
        throw omd::ValidationError("frames path is neither - nor a directory: " + frames);
    }

    std::cerr << "wrote " << records << " prediction records to " << out_path << "\n";
    return 0;
}

void print_report(const omd::metrics::EvaluationReport& report) {
    const auto& d = report.detection;
    std::printf("%-12s %8s %22s %22s\n", "", "F1", "Correct", "Mistake");
    std::printf("%-12s %8s %10s %10s %10s %10s\n", "", "", "Prec", "Rec", "Prec", "Rec");
    std::printf("%-12s %8.3f %10.3f %10.3f %10.3f %10.3f\n", "detection", d.f1_macro,
                d.precision_correct, d.recall_correct, d.precision_mistake, d.recall_mistake);
    if (report.caption.has_value()) {
        const auto& c = *report.caption;
        std::printf("\n%-12s %8s %8s %8s   (items=%d)\n", "", "BLEU", "ROUGEL", "CIDEr",
                    c.num_items);
        std::printf("%-12s %8.3f %8.3f ", "explanation", c.bleu, c.rouge_l);
        if (c.cider.has_value())
            std::printf("%8.3f\n", *c.cider);
        else
            std::printf("%8s\n", "n/a");
    } else {
        std::printf("\nno explained mistake segments; caption metrics skipped\n");
    }
}

json report_to_json(const omd::metrics::EvaluationReport& report) {
    json j;
    j["evaluated_segments"] = report.evaluated_segments;
    j["counts"] = {{"tp", report.counts.tp},
                   {"fp", report.counts.fp},
                   {"tn", report.counts.tn},
                   {"fn", report.counts.fn}};
    j["detection"] = {{"precision_correct", report.detection.precision_correct},
                      {"recall_correct", report.detection.recall_correct},
                      {"precision_mistake", report.detection.precision_mistake},
                      {"recall_mistake", report.detection.recall_mistake},
                      {"f1_macro", report.detection.f1_macro},
                      {"zero_division_flags", report.detection.zero_division_flags}};
    if (report.caption.has_value()) {
        j["caption"] = {{"bleu", report.caption->bleu},
                        {"rouge_l", report.caption->rouge_l},
                        {"num_items", report.caption->num_items}};
        if (report.caption->cider.has_value())
            j["caption"]["cider"] = *report.caption->cider;
        else
            j["caption"]["cider"] = nullptr;
    } else {
        j["caption"] = nullptr;
    }
    return j;
}

int cmd_evaluate(const std::string& predictions_path, const std::string& annotations_path,
                 const std::string& out_path) {
    auto predictions = omd::read_predictions(predictions_path);
    auto annotations = read_annotations_any(annotations_path);
    auto report = omd::metrics::evaluate_run(predictions, annotations);
    print_report(report);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw omd::ValidationError("cannot open for writing: " + out_path);
        out << report_to_json(report).dump(2) << "\n";
    }
    return 0;
}

int cmd_plot_timeline(const std::string& predictions_path, const std::string& annotations_path,
                      const std::string& out_csv, const std::string& out_svg,
                      std::string video_id) {
    auto predictions = omd::read_predictions(predictions_path);
    auto annotations = read_annotations_any(annotations_path);
    if (video_id.empty()) {
        std::set<std::string> ids;
        for (const auto& p : predictions) ids.insert(p.video_id);
        if (ids.size() != 1) {
            std::string msg = "predictions contain " + std::to_string(ids.size()) +
                              " video ids; pick one with --video:";
            for (const auto& id : ids) msg += " " + id;
            throw omd::ValidationError(msg);
        }
        video_id = *ids.begin();
    }
    auto timeline = omd::build_timeline(predictions, annotations, video_id);
    omd::write_timeline_csv(timeline, out_csv);
    if (!out_svg.empty()) omd::write_timeline_svg(timeline, out_svg);
    std::cout << "wrote " << timeline.rows.size() << " timeline rows for " << video_id << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"omd — online mistake detection over streaming video"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--set", overrides, "override a config key, e.g. --set gate.tau=0.7");

    auto load_config = [&]() { return omd::load_run_config(config_path, overrides); };

    int rc = 0;

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic labeled dataset");
    std::string synth_out;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->callback([&]() { rc = cmd_synth_data(load_config(), synth_out); });

    auto* train = app.add_subcommand("train", "train the detector on a dataset");
    std::string train_data, train_out, train_log;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--log", train_log, "training log CSV (default <out>.log.csv)");
    train->callback([&]() { rc = cmd_train(load_config(), train_data, train_out, train_log); });

    auto* detect = app.add_subcommand("detect", "run streaming detection over frames");
    std::string det_ckpt, det_frames, det_out;
    detect->add_option("--checkpoint", det_ckpt, "model checkpoint")->required();
    detect->add_option("--frames", det_frames,
                       "video dir, dataset dir, or - for the stdin raw-frame protocol")
        ->required();
    detect->add_option("--out", det_out, "prediction JSONL output")->required();
    detect->callback(
        [&]() { rc = cmd_detect(load_config(), det_ckpt, det_frames, det_out); });

    auto* evaluate = app.add_subcommand("evaluate", "score predictions against annotations");
    std::string eval_pred, eval_anno, eval_out;
    evaluate->add_option("--predictions", eval_pred, "prediction JSONL")->required();
    evaluate->add_option("--annotations", eval_anno, "annotation JSONL or dataset directory")
        ->required();
    evaluate->add_option("--out", eval_out, "JSON report output path");
    evaluate->callback([&]() { rc = cmd_evaluate(eval_pred, eval_anno, eval_out); });

    auto* plot = app.add_subcommand("plot-timeline", "emit probability-over-time CSV/SVG");
    std::string plot_pred, plot_anno, plot_csv, plot_svg, plot_video;
    plot->add_option("--predictions", plot_pred, "prediction JSONL")->required();
    plot->add_option("--annotations", plot_anno, "annotation JSONL or dataset directory")
        ->required();
    plot->add_option("--out", plot_csv, "CSV output path")->required();
    plot->add_option("--svg", plot_svg, "optional SVG output path");
    plot->add_option("--video", plot_video, "video id (required for multi-video predictions)");
    plot->callback([&]() {
        rc = cmd_plot_timeline(plot_pred, plot_anno, plot_csv, plot_svg, plot_video);
    });

    auto* print_config = app.add_subcommand("print-config", "print the default configuration");
    print_config->callback([&]() { std::cout << omd::default_run_config_json() << "\n"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const omd::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const omd::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 3;
    }
    return rc;
}
