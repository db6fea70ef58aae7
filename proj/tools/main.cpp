#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "anonypipe/attributes.hpp"
#include "anonypipe/config.hpp"
#include "anonypipe/detection.hpp"
#include "anonypipe/error.hpp"
#include "anonypipe/evaluation.hpp"
#include "anonypipe/http_backends.hpp"
#include "anonypipe/inpainting.hpp"
#include "anonypipe/io.hpp"
#include "anonypipe/manifest.hpp"
#include "anonypipe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace anonypipe;

namespace {

struct Backends {
    std::unique_ptr<FaceDetector> detector;
    std::unique_ptr<AttributeExtractor> extractor;
    std::unique_ptr<InpaintBackend> inpainter;
};

// One backend set per worker; none of the implementations are shared.
Backends make_backends(const RunConfig& cfg) {
    Backends b;
    if (cfg.detector == "external")
        b.detector = std::make_unique<HttpDetector>(cfg.external_endpoint);
    else
        b.detector = std::make_unique<StubFileDetector>();

    if (cfg.extractor == "external") {
        b.extractor = std::make_unique<HttpAttributeExtractor>(cfg.external_endpoint);
    } else if (fs::exists(cfg.extractor_table)) {
        b.extractor =
            std::make_unique<StubTableExtractor>(StubTableExtractor::from_file(cfg.extractor_table));
    } else {
        // Empty table: any face that needs attributes becomes backend_failed.
        b.extractor = std::make_unique<StubTableExtractor>();
    }

    if (cfg.inpaint_backend == "external")
        b.inpainter = std::make_unique<HttpInpainter>(cfg.external_endpoint);
    else if (cfg.inpaint_backend == "noise")
        b.inpainter = std::make_unique<SeededNoiseInpainter>();
    else
        b.inpainter = std::make_unique<IdentityInpainter>();
    return b;
}

std::unique_ptr<FaceEmbedder> make_embedder(const RunConfig& cfg) {
    if (cfg.embedder == "external")
        return std::make_unique<HttpEmbedder>(cfg.external_endpoint);
    return std::make_unique<GridMeanEmbedder>();
}

// Input discovery: either a directory tree of PNG/JPEG images or a text file
// with one relative path per line. Paths are sorted so runs are
// deterministic regardless of directory iteration order.
struct InputSet {
    fs::path root;
    std::vector<fs::path> relative_paths;
};

InputSet discover_inputs(const fs::path& input) {
    InputSet set;
    if (fs::is_directory(input)) {
        set.root = input;
        for (const auto& entry : fs::recursive_directory_iterator(input)) {
            if (!entry.is_regular_file() || !is_supported_image_path(entry.path())) continue;
            set.relative_paths.push_back(fs::relative(entry.path(), input));
        }
    } else {
        set.root = input.parent_path().empty() ? fs::path(".") : input.parent_path();
        std::ifstream in(input);
        if (!in)
            throw ConfigError("input: cannot open path list " + input.string());
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            fs::path p(line);
            if (p.is_absolute())
                throw ConfigError("input: path list entries must be relative, got " + line);
            set.relative_paths.push_back(p);
        }
    }
    std::sort(set.relative_paths.begin(), set.relative_paths.end(),
              [](const fs::path& a, const fs::path& b) {
                  return a.generic_string() < b.generic_string();
              });
    const auto dup = std::adjacent_find(set.relative_paths.begin(), set.relative_paths.end());
    if (dup != set.relative_paths.end())
        throw ConfigError("input: duplicate entry " + dup->generic_string());
    return set;
}

ManifestEntry process_one_image(const RunConfig& cfg, const fs::path& root, const fs::path& rel,
                                Backends& backends) {
    const std::string id = rel.generic_string();
    ManifestEntry entry;
    entry.image_id = id;
    entry.source_path = id;
    try {
        const ImageRecord image = load_image(root / rel, id);
        const AnonymizationResult result = anonymize_image(
            image, cfg.pipeline, *backends.detector, *backends.extractor, *backends.inpainter);

        const fs::path out_path = cfg.output / rel;
        save_image(result.output, out_path);
        entry.output_path = id;

        std::vector<BinaryMask> masks;
        for (const auto& face : result.faces) {
            ManifestFace mf;
            mf.box = face.detection.box;
            mf.status = face.status;
            mf.prompt = face.prompt;
            mf.seed = face.seed;
            mf.confidence = face.detection.confidence;
            entry.faces.push_back(std::move(mf));
            if (cfg.emit_masks && face.status == FaceStatus::anonymized) {
                const BoundingBox padded =
                    pad_box(face.detection.box, cfg.pipeline.mask_padding_ratio, image.height,
                            image.width);
                masks.push_back(rasterize_mask(padded, image.height, image.width));
            }
        }
        if (cfg.emit_masks) {
            const BinaryMask all = mask_union(image.height, image.width, masks);
            save_mask_png(all, out_path.string() + ".mask.png");
        }
    } catch (const std::exception& e) {
        entry.output_path.clear();
        entry.faces.clear();
        entry.error = e.what();
    }
    return entry;
}

int cmd_anonymize(const RunConfig& cfg) {
    const InputSet inputs = discover_inputs(cfg.input);
    fs::create_directories(cfg.output);
    for (const auto& rel : inputs.relative_paths)
        fs::create_directories((cfg.output / rel).parent_path());

    const std::size_t n = inputs.relative_paths.size();
    std::vector<ManifestEntry> entries(n);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;

    auto worker = [&]() {
        Backends backends = make_backends(cfg);
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            entries[i] = process_one_image(cfg, inputs.root, inputs.relative_paths[i], backends);
            if (entries[i].error) {
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "error: " << entries[i].image_id << ": " << *entries[i].error << "\n";
            }
        }
    };

    const unsigned thread_count =
        static_cast<unsigned>(std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), std::max<std::size_t>(n, 1)));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    Manifest manifest;
    manifest.entries = std::move(entries);
    fs::create_directories(cfg.manifest_path.parent_path().empty()
                               ? fs::path(".")
                               : cfg.manifest_path.parent_path());
    write_manifest(cfg.manifest_path, manifest);

    std::size_t failed = 0;
    std::size_t faces = 0;
    std::size_t by_status[4] = {0, 0, 0, 0};
    for (const auto& entry : manifest.entries) {
        if (entry.error) {
            ++failed;
            continue;
        }
        for (const auto& face : entry.faces) {
            ++faces;
            ++by_status[static_cast<int>(face.status)];
        }
    }
    std::cout << "images: " << n << " (" << (n - failed) << " ok, " << failed << " failed)\n"
              << "faces: " << faces << " (anonymized " << by_status[0]
              << ", skipped_low_resolution " << by_status[1] << ", skipped_low_confidence "
              << by_status[2] << ", backend_failed " << by_status[3] << ")\n"
              << "manifest: " << cfg.manifest_path.string() << "\n";
    return failed > 0 ? 1 : 0;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["pairs"] = report.pairs.size();
    j["skipped_faces"] = report.skipped_faces;
    if (const auto stats = report.distance_stats()) {
        j["distance"] = {{"mean", stats->mean},
                         {"median", stats->median},
                         {"min", stats->min},
                         {"max", stats->max}};
    } else {
        j["distance"] = nullptr;
    }
    if (const auto rates = report.agreement_rates()) {
        j["agreement"] = {{"age", rates->age},
                          {"gender", rates->gender},
                          {"ethnicity", rates->ethnicity},
                          {"emotion", rates->emotion}};
    } else {
        j["agreement"] = nullptr;
    }
    j["errors"] = nlohmann::json::array();
    for (const auto& e : report.errors)
        j["errors"].push_back(
            {{"image_id", e.image_id}, {"face_index", e.face_index}, {"message", e.message}});
    return j;
}

int cmd_evaluate(const RunConfig& cfg) {
    const Manifest manifest = read_manifest(cfg.manifest_path);
    const auto extractor_owner = make_backends(cfg);  // reuses extractor selection
    AttributeExtractor& extractor = *extractor_owner.extractor;
    const auto embedder = make_embedder(cfg);

    // Source paths are relative to the originals root: the input directory,
    // or the parent directory when the run used a path-list file.
    const fs::path originals_root =
        fs::is_directory(cfg.input)
            ? cfg.input
            : (cfg.input.parent_path().empty() ? fs::path(".") : cfg.input.parent_path());

    std::vector<ImageRecord> originals;
    std::vector<AnonymizationResult> results;
    std::vector<PairError> missing;

    for (const auto& entry : manifest.entries) {
        if (entry.error) continue;  // the run already reported this image
        const fs::path in_path = originals_root / entry.source_path;
        const fs::path out_path = cfg.output / entry.output_path;
        bool ok = true;
        for (const auto& p : {in_path, out_path}) {
            if (!fs::exists(p)) {
                std::cerr << "missing: " << p.string() << "\n";
                missing.push_back({entry.image_id, -1, "missing image file " + p.string()});
                ok = false;
            }
        }
        if (!ok) continue;
        originals.push_back(load_image(in_path, entry.image_id));
        AnonymizationResult result;
        result.image_id = entry.image_id;
        result.output = load_image(out_path, entry.image_id);
        for (const auto& mf : entry.faces) {
            FaceRecord face;
            face.detection = FaceDetection{mf.box, mf.confidence};
            face.prompt = mf.prompt;
            face.seed = mf.seed;
            face.status = mf.status;
            result.faces.push_back(std::move(face));
        }
        results.push_back(std::move(result));
    }

    EvalReport report = evaluate_pairs(originals, results, *embedder, extractor, cfg.age_tolerance);
    report.errors.insert(report.errors.begin(), missing.begin(), missing.end());

    fs::create_directories(cfg.report_path.parent_path().empty()
                               ? fs::path(".")
                               : cfg.report_path.parent_path());
    std::ofstream out(cfg.report_path);
    if (!out)
        throw IoError("cannot write report " + cfg.report_path.string());
    out << report_to_json(report).dump(2) << "\n";

    std::cout << "pairs evaluated: " << report.pairs.size() << "\n"
              << "skipped faces:   " << report.skipped_faces << "\n";
    if (const auto stats = report.distance_stats()) {
        std::printf("identity distance: mean %.6f  median %.6f  min %.6f  max %.6f\n", stats->mean,
                    stats->median, stats->min, stats->max);
    } else {
        std::cout << "identity distance: (no pairs)\n";
    }
    if (const auto rates = report.agreement_rates()) {
        std::printf("agreement rates:   age %.3f  gender %.3f  ethnicity %.3f  emotion %.3f\n",
                    rates->age, rates->gender, rates->ethnicity, rates->emotion);
    } else {
        std::cout << "agreement rates:   (no pairs)\n";
    }
    std::cout << "errors: " << report.errors.size() << "\n"
              << "report: " << cfg.report_path.string() << "\n";
    return report.errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Batch face anonymization: detect faces, extract attributes, build text prompts, "
                 "and replace each face via mask inpainting"};
    app.require_subcommand(1);

    FlagValues flags;
    bool emit_masks_flag = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--input", flags.input, "Input directory tree or newline-delimited path list");
        cmd->add_option("--output", flags.output, "Output directory (mirrors the input tree)");
        cmd->add_option("--config", flags.config_file, "JSON config file");
    };

    CLI::App* anonymize = app.add_subcommand("anonymize", "Anonymize every image under --input");
    add_common(anonymize);
    anonymize->add_option("--backend", flags.backend, "Inpainting backend: identity, noise, external");
    anonymize->add_option("--min-face-side", flags.min_face_side,
                          "Skip faces whose box is smaller than this many pixels");
    anonymize->add_option("--seed", flags.seed, "Fixed inpainting seed (default derives one per face)");
    anonymize->add_option("--workers", flags.workers, "Worker threads over images");
    anonymize->add_option("--template", flags.prompt_template, "Prompt template override");
    auto* emit = anonymize->add_flag("--emit-masks", emit_masks_flag,
                                     "Write a debug union mask PNG next to each output");

    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "Compare originals against anonymized outputs using the run manifest");
    add_common(evaluate);
    evaluate->add_option("--manifest", flags.manifest, "Manifest path (default <output>/manifest.jsonl)");
    evaluate->add_option("--report", flags.report, "Report path (default <output>/eval_report.json)");
    evaluate->add_option("--age-tolerance", flags.age_tolerance,
                         "Age agreement tolerance in years (default 5)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    if (emit->count() > 0) flags.emit_masks = true;

    try {
        const EnvLookup env = system_env();
        const RunConfig cfg = load_config(flags, env, resolve_config_path(flags, env));
        if (app.got_subcommand(anonymize)) return cmd_anonymize(cfg);
        return cmd_evaluate(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
