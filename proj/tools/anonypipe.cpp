// anonypipe command line: run, report, check, serve-toy.

#include "anonypipe/image_io.hpp"
#include "anonypipe/obfuscate.hpp"
#include "anonypipe/pipeline.hpp"
#include "anonypipe/protocol.hpp"

#include <CLI11.hpp>

#include <unistd.h>

#include <fstream>
#include <iostream>

namespace ap = anonypipe;
namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string annotations, images, faces, keypoints;
    std::string target = "face";
    std::string method = "maskout";
    int dilation = -1;
};

void add_inputs(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--annotations", a.annotations, "COCO-style annotation JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--images", a.images, "image root directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--faces", a.faces, "face-box sidecar (JSON lines)")->check(CLI::ExistingFile);
    cmd->add_option("--keypoints", a.keypoints, "keypoint sidecar (JSON lines)")->check(CLI::ExistingFile);
}

void add_region_flags(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--target", a.target, "face or body")->check(CLI::IsMember({"face", "body"}));
    cmd->add_option("--method", a.method, "maskout, blur or realistic")
        ->check(CLI::IsMember({"maskout", "blur", "realistic"}));
    cmd->add_option("--dilation", a.dilation, "body mask dilation radius in pixels (default: bbox-relative)");
}

ap::RunInputs run_inputs(const CommonArgs& a) {
    ap::RunInputs in{a.annotations, a.images, std::nullopt, std::nullopt};
    if (!a.faces.empty()) in.faces_file = a.faces;
    if (!a.keypoints.empty()) in.keypoints_file = a.keypoints;
    return in;
}

ap::Dataset load_inputs(const CommonArgs& a, ap::FaceBoxFile* faces) {
    ap::Dataset ds = ap::load_dataset(a.annotations, a.images);
    if (!a.keypoints.empty()) ds.attach_keypoints(ap::load_keypoints(a.keypoints));
    if (faces && !a.faces.empty()) *faces = ap::load_face_boxes(a.faces, ds);
    return ds;
}

int check(const CommonArgs& a, const std::string& anonymized_root, const std::string& manifest_path) {
    ap::AnonymizationConfig config;
    config.target = ap::parse_target(a.target);
    config.method = ap::parse_method(a.method);
    if (a.dilation >= 0) config.dilation = a.dilation;

    ap::FaceBoxFile faces;
    const ap::Dataset ds = load_inputs(a, &faces);

    std::map<std::pair<std::int64_t, std::int64_t>, ap::ManifestEntry> manifest;
    if (!manifest_path.empty()) {
        std::ifstream in(manifest_path);
        if (!in) throw std::runtime_error("cannot open " + manifest_path);
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            auto e = ap::ManifestEntry::from_json(nlohmann::json::parse(line));
            manifest.emplace(std::pair{e.image_id, e.instance_id}, e);
        }
    }

    const auto filtered = ap::filter_instances(ds, config.person_classes);
    std::size_t errors = 0, warnings = 0;
    for (const auto& rec : ds.images()) {
        std::vector<ap::InstanceAnnotation> mine;
        for (const auto& inst : filtered)
            if (inst.image_id == rec.id) mine.push_back(inst);
        const auto built = ap::build_regions(rec, mine, faces.boxes, config);
        std::vector<ap::AnonymizationRegion> regions;
        std::vector<ap::Rect> windows;
        for (const auto& r : built.regions) {
            auto it = manifest.find({rec.id, r.instance_id});
            if (it != manifest.end() && !it->second.processed()) continue;
            if (it != manifest.end() && it->second.crop_rect) windows.push_back(*it->second.crop_rect);
            regions.push_back(r);
        }
        if (built.regions.empty()) continue;
        const ap::Image8 original = ds.load_pixels(rec);
        const ap::Image8 anonymized = ap::read_image(fs::path(anonymized_root) / rec.path);
        for (const auto& v : ap::privacy_check(original, anonymized, regions, config.method, windows)) {
            (v.warning ? warnings : errors)++;
            std::cout << (v.warning ? "warning" : "violation") << " image=" << rec.id;
            if (v.instance_id) std::cout << " instance=" << *v.instance_id;
            std::cout << " rule=" << v.rule << ": " << v.detail << '\n';
        }
    }
    std::cout << errors << " violation(s), " << warnings << " warning(s)\n";
    return errors ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dataset anonymization for person instances"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string out, context_fix = "none", truncation;
    double psi = 0.5, blur_sigma = ap::kDefaultBlurSigma;
    std::uint64_t seed = 0;
    int clusters = 8;
    std::vector<std::string> backends;

    auto* run = app.add_subcommand("run", "anonymize a dataset into an output tree");
    add_inputs(run, args);
    add_region_flags(run, args);
    run->add_option("--out", out, "output root")->required();
    run->add_option("--context-fix", context_fix, "none, hm or hm-lo")->check(CLI::IsMember({"none", "hm", "hm-lo"}));
    run->add_option("--truncation", truncation, "none, standard or multimodal (default: per target)")
        ->check(CLI::IsMember({"none", "standard", "multimodal"}));
    run->add_option("--psi", psi, "truncation strength in [0, 1]")->check(CLI::Range(0.0, 1.0));
    run->add_option("--seed", seed, "global seed");
    run->add_option("--backend", backends, "builtin:toy or cmd:<command>; repeatable");
    run->add_option("--blur-sigma", blur_sigma, "Gaussian blur sigma");
    run->add_option("--clusters", clusters, "cluster count for multimodal truncation");

    std::string report_out;
    auto* report = app.add_subcommand("report", "print dataset statistics as JSON");
    add_inputs(report, args);
    report->add_option("--out", report_out, "write the report here instead of stdout");

    std::string anonymized, manifest;
    auto* chk = app.add_subcommand("check", "verify an anonymized tree against its regions");
    add_inputs(chk, args);
    add_region_flags(chk, args);
    chk->add_option("--anonymized", anonymized, "anonymized image root")->required()->check(CLI::ExistingDirectory);
    chk->add_option("--manifest", manifest, "manifest of the run (skips and paste windows)")->check(CLI::ExistingFile);

    std::string toy_target = "face";
    int toy_size = 128;
    auto* serve = app.add_subcommand("serve-toy", "serve the toy generator over stdio");
    serve->add_option("--target", toy_target)->check(CLI::IsMember({"face", "body"}));
    serve->add_option("--size", toy_size, "face resolution")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            ap::AnonymizationConfig config;
            config.target = ap::parse_target(args.target);
            config.method = ap::parse_method(args.method);
            config.context_fix = ap::parse_context_fix(context_fix);
            if (!truncation.empty()) config.truncation = ap::parse_truncation(truncation);
            if (args.dilation >= 0) config.dilation = args.dilation;
            config.psi = psi;
            config.seed = seed;
            config.blur_sigma = blur_sigma;
            config.clusters = clusters;
            if (!backends.empty()) config.backends = backends;
            const auto summary = ap::anonymize_dataset(run_inputs(args), config, out);
            std::size_t done = 0;
            for (const auto& e : summary.manifest) done += e.processed();
            std::cerr << "images: " << summary.images_written << ", instances processed: " << done
                      << ", skipped: " << summary.manifest.size() - done;
            if (summary.face_box_warnings) std::cerr << ", face-box warnings: " << summary.face_box_warnings;
            std::cerr << '\n';
            return 0;
        }
        if (*report) {
            ap::FaceBoxFile faces;
            const ap::Dataset ds = load_inputs(args, &faces);
            const auto rep = ap::dataset_report(ds, args.faces.empty() ? nullptr : &faces.boxes);
            const std::string text = rep.to_json().dump(2) + "\n";
            if (report_out.empty()) {
                std::cout << text;
            } else {
                std::ofstream(report_out) << text;
            }
            return 0;
        }
        if (*chk) return check(args, anonymized, manifest);
        if (*serve) {
            const auto info = toy_target == "body" ? ap::ToyGenerator::body_info() : ap::ToyGenerator::face_info(toy_size);
            ap::ToyGenerator toy(info);
            ap::protocol::serve(toy, STDIN_FILENO, STDOUT_FILENO);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "anonypipe: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
