#include "anonypipe/pipeline.hpp"

#include "anonypipe/image_io.hpp"
#include "anonypipe/obfuscate.hpp"
#include "anonypipe/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <thread>

namespace anonypipe {

using nlohmann::json;

std::string to_string(Method m) {
    switch (m) {
        case Method::maskout: return "maskout";
        case Method::blur: return "blur";
        default: return "realistic";
    }
}

std::string to_string(ContextFix c) {
    switch (c) {
        case ContextFix::none: return "none";
        case ContextFix::hm: return "hm";
        default: return "hm-lo";
    }
}

std::string to_string(Truncation t) {
    switch (t) {
        case Truncation::none: return "none";
        case Truncation::standard: return "standard";
        default: return "multimodal";
    }
}

Method parse_method(const std::string& s) {
    if (s == "maskout") return Method::maskout;
    if (s == "blur") return Method::blur;
    if (s == "realistic") return Method::realistic;
    throw std::invalid_argument("unknown method '" + s + "'");
}

ContextFix parse_context_fix(const std::string& s) {
    if (s == "none") return ContextFix::none;
    if (s == "hm") return ContextFix::hm;
    if (s == "hm-lo") return ContextFix::hmlo;
    throw std::invalid_argument("unknown context fix '" + s + "'");
}

Truncation parse_truncation(const std::string& s) {
    if (s == "none") return Truncation::none;
    if (s == "standard") return Truncation::standard;
    if (s == "multimodal") return Truncation::multimodal;
    throw std::invalid_argument("unknown truncation '" + s + "'");
}

RegionKind parse_target(const std::string& s) {
    if (s == "face") return RegionKind::face;
    if (s == "body") return RegionKind::body;
    throw std::invalid_argument("unknown target '" + s + "'");
}

void AnonymizationConfig::validate() const {
    if (context_fix != ContextFix::none && method != Method::realistic)
        throw std::invalid_argument("context fix " + to_string(context_fix) + " requires the realistic method");
    if (!(psi >= 0 && psi <= 1)) throw std::invalid_argument("psi must lie in [0, 1]");
    if (!(blur_sigma > 0)) throw std::invalid_argument("blur sigma must be positive");
    if (dilation && *dilation < 0) throw std::invalid_argument("dilation must be non-negative");
    if (!(keypoint_threshold >= 0 && keypoint_threshold <= 1))
        throw std::invalid_argument("keypoint threshold must lie in [0, 1]");
    if (clusters < 1) throw std::invalid_argument("cluster count must be at least 1");
    if (method == Method::realistic && backends.empty()) throw std::invalid_argument("realistic method needs a backend");
}

Truncation AnonymizationConfig::effective_truncation() const {
    if (truncation) return *truncation;
    return target == RegionKind::body ? Truncation::multimodal : Truncation::none;
}

BackendSet open_backends(const std::vector<std::string>& specs) {
    BackendSet set;
    for (const auto& spec : specs) {
        if (spec == "builtin:toy") {
            for (auto& info : builtin_toy_infos()) {
                set.sessions.push_back(std::make_unique<ToyGenerator>(info));
                set.infos.push_back(info);
            }
        } else if (spec.rfind("cmd:", 0) == 0) {
            auto proc = std::make_unique<protocol::ProcessBackend>(spec.substr(4));
            set.infos.push_back(proc->info());
            set.sessions.push_back(std::move(proc));
        } else {
            throw std::invalid_argument("unknown backend spec '" + spec + "'");
        }
    }
    return set;
}

CenterTable estimate_centers(const std::vector<BackendInfo>& infos, const AnonymizationConfig& config) {
    CenterTable table;
    for (const auto& info : infos) {
        if (table.count(info.name)) continue;
        const int n = config.clusters * config.cluster_samples_per_center;
        std::vector<LatentVector> samples;
        samples.reserve(n);
        for (int i = 0; i < n; ++i) {
            auto z = sample_latent(derive_seed(config.seed, -1, i), info.latent_dim);
            z.space = LatentSpace::omega;
            samples.push_back(std::move(z));
        }
        table.emplace(info.name, estimate_cluster_centers(samples, config.clusters, derive_seed(config.seed, -2, 0)));
    }
    return table;
}

json ManifestEntry::to_json() const {
    json j{{"image_id", image_id},
           {"instance_id", instance_id},
           {"kind", anonypipe::to_string(kind)},
           {"method", anonypipe::to_string(method)},
           {"status", processed() ? "processed" : "skipped"}};
    if (backend) j["backend"] = *backend;
    if (latent_seed) j["latent_seed"] = *latent_seed;
    if (method == Method::realistic) j["context_fix"] = anonypipe::to_string(context_fix);
    if (hmlo_final_loss) j["hmlo_final_loss"] = *hmlo_final_loss;
    if (hmlo_steps) j["hmlo_steps"] = *hmlo_steps;
    if (crop_rect) j["crop_rect"] = {crop_rect->x, crop_rect->y, crop_rect->w, crop_rect->h};
    if (skip_reason) j["skip_reason"] = *skip_reason;
    return j;
}

ManifestEntry ManifestEntry::from_json(const json& j) {
    ManifestEntry e;
    e.image_id = j.at("image_id").get<std::int64_t>();
    e.instance_id = j.at("instance_id").get<std::int64_t>();
    e.kind = parse_target(j.at("kind").get<std::string>());
    e.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("backend")) e.backend = j.at("backend").get<std::string>();
    if (j.contains("latent_seed")) e.latent_seed = j.at("latent_seed").get<std::uint64_t>();
    if (j.contains("context_fix")) e.context_fix = parse_context_fix(j.at("context_fix").get<std::string>());
    if (j.contains("hmlo_final_loss")) e.hmlo_final_loss = j.at("hmlo_final_loss").get<double>();
    if (j.contains("hmlo_steps")) e.hmlo_steps = j.at("hmlo_steps").get<int>();
    if (j.contains("crop_rect")) {
        const auto& r = j.at("crop_rect");
        e.crop_rect = Rect{r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()};
    }
    if (j.contains("skip_reason")) e.skip_reason = j.at("skip_reason").get<std::string>();
    return e;
}

namespace {

ManifestEntry base_entry(std::int64_t image_id, std::int64_t instance_id, const AnonymizationConfig& config) {
    ManifestEntry e;
    e.image_id = image_id;
    e.instance_id = instance_id;
    e.kind = config.target;
    e.method = config.method;
    e.context_fix = config.context_fix;
    return e;
}

ManifestEntry skipped(std::int64_t image_id, std::int64_t instance_id, const AnonymizationConfig& config,
                      std::string reason) {
    ManifestEntry e = base_entry(image_id, instance_id, config);
    e.skip_reason = std::move(reason);
    return e;
}

}  // namespace

ImageRegions build_regions(const ImageRecord& image, std::span<const InstanceAnnotation> filtered,
                           std::span<const FaceBox> face_boxes, const AnonymizationConfig& config) {
    ImageRegions out;
    std::vector<const InstanceAnnotation*> ordered;
    for (const auto& inst : filtered) ordered.push_back(&inst);
    std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });

    if (config.target == RegionKind::body) {
        for (const auto* inst : ordered) {
            try {
                const int radius = config.dilation ? *config.dilation : default_dilation_radius(inst->bbox);
                out.regions.push_back(body_region(*inst, image.width, image.height, radius));
            } catch (const std::invalid_argument& e) {
                out.skipped.push_back(skipped(image.id, inst->id, config, std::string("empty-region: ") + e.what()));
            }
        }
        return out;
    }

    std::vector<FaceBox> boxes;
    for (const auto& fb : face_boxes)
        if (fb.image_id == image.id) boxes.push_back(fb);
    const auto matches = match_faces(boxes, filtered, image.width, image.height);
    std::map<std::int64_t, const FaceMatch*> by_instance;
    for (const auto& m : matches) by_instance[m.instance_id] = &m;
    for (const auto* inst : ordered) {
        auto it = by_instance.find(inst->id);
        if (it == by_instance.end()) {
            out.skipped.push_back(skipped(image.id, inst->id, config, "no-face-match"));
            continue;
        }
        try {
            out.regions.push_back(face_region(*it->second, image.width, image.height));
        } catch (const std::invalid_argument& e) {
            out.skipped.push_back(skipped(image.id, inst->id, config, std::string("empty-region: ") + e.what()));
        }
    }
    return out;
}

namespace {

void realistic_region(Image8& image, std::int64_t image_id, const AnonymizationRegion& region,
                      const AnonymizationConfig& config, BackendSet& backends, const CenterTable* centers,
                      ManifestEntry& entry) {
    const Rect tight = tight_rect(region.mask);
    const std::size_t idx = select_backend(region.kind, std::max(tight.w, tight.h), backends.infos);
    const BackendInfo& info = backends.infos[idx];
    GeneratorBackend& backend = *backends.sessions[idx];
    entry.backend = info.name;

    std::optional<Keypoints> image_kps;
    if (info.requires_keypoints) {
        if (!region.keypoints || visible_keypoints(*region.keypoints, config.keypoint_threshold).none()) {
            entry.skip_reason = "no-keypoints";
            return;
        }
        image_kps = region.keypoints;
        for (auto& kp : *image_kps) kp.confidence = kp.confidence >= config.keypoint_threshold ? 1.0 : 0.0;
    }

    const double aspect = double(info.resolution.height) / double(info.resolution.width);
    const Rect rect = compute_crop_box(region.mask, aspect, config.crop_expansion);
    const Crop crop = extract_crop(image, region.mask, rect, info.resolution);
    entry.crop_rect = rect;
    if (!crop.mask.any()) {
        entry.skip_reason = "empty-crop-mask";
        return;
    }
    std::optional<Keypoints> crop_kps;
    if (image_kps) crop_kps = keypoints_to_crop(*image_kps, crop.spec);

    const std::uint64_t seed = derive_seed(config.seed, image_id, region.instance_id);
    entry.latent_seed = seed;
    LatentVector latent = sample_latent(seed, info.latent_dim);
    switch (config.effective_truncation()) {
        case Truncation::none: break;
        case Truncation::standard: latent = truncate_standard(latent, config.psi); break;
        case Truncation::multimodal: {
            if (!centers || !centers->count(info.name)) throw BackendError("no cluster centers for " + info.name);
            latent.space = LatentSpace::omega;
            latent = truncate_multimodal(latent, centers->at(info.name), config.psi);
            break;
        }
    }

    Image8 synthesized;
    if (config.context_fix == ContextFix::hmlo) {
        HmloResult r = hmlo_optimize(backend, crop.pixels, crop.mask, crop_kps, latent.values, config.hmlo);
        if (r.error && r.trace.empty()) throw BackendError(*r.error);
        entry.hmlo_final_loss = r.final_loss();
        entry.hmlo_steps = r.steps;
        synthesized = std::move(r.crop);
    } else {
        synthesized = synthesize(backend, crop.pixels, crop.mask, crop_kps, latent.values);
        if (config.context_fix == ContextFix::hm) synthesized = match_histograms(synthesized, crop.pixels);
    }
    image = paste(image, crop.spec, synthesized, blur_mask(crop.mask));
}

}  // namespace

ImageResult anonymize_image(const Image8& image, std::int64_t image_id, std::span<const AnonymizationRegion> regions,
                            const AnonymizationConfig& config, BackendSet* backends, const CenterTable* centers) {
    ImageResult result{image, {}};
    for (const auto& region : regions) {
        require_same_size(image, region.mask);
        ManifestEntry entry = base_entry(image_id, region.instance_id, config);
        entry.kind = region.kind;
        switch (config.method) {
            case Method::maskout: result.image = maskout(result.image, region.mask); break;
            case Method::blur: result.image = gaussian_blur_anonymize(result.image, region.mask, config.blur_sigma); break;
            case Method::realistic:
                if (!backends) throw std::invalid_argument("realistic anonymization needs backends");
                try {
                    realistic_region(result.image, image_id, region, config, *backends, centers, entry);
                } catch (const MissingKeypoints&) {
                    entry.skip_reason = "no-keypoints";
                } catch (const std::exception& e) {
                    entry.skip_reason = std::string("backend-error: ") + e.what();
                }
                break;
        }
        result.entries.push_back(std::move(entry));
    }
    return result;
}

double DatasetReport::cdf_at(double t) const {
    if (normalized_lengths.empty()) return 0.0;
    const auto n = std::count_if(normalized_lengths.begin(), normalized_lengths.end(), [t](double v) { return v <= t; });
    return double(n) / double(normalized_lengths.size());
}

json DatasetReport::to_json() const {
    return {{"total_instances", total_instances},
            {"filtered_instances", filtered_instances},
            {"face_matches", face_matches},
            {"keypoint_instances", keypoint_instances},
            {"cdf_defined", cdf_defined},
            {"cdf_grid", cdf_grid},
            {"cdf", cdf}};
}

DatasetReport dataset_report(const Dataset& dataset, const std::vector<FaceBox>* face_boxes,
                             const std::set<std::string>& person_classes, double keypoint_threshold) {
    DatasetReport rep;
    for (const auto& inst : dataset.instances())
        if (person_classes.count(inst.category)) ++rep.total_instances;
    const auto filtered = filter_instances(dataset, person_classes);
    rep.filtered_instances = filtered.size();

    for (const auto& inst : filtered) {
        const ImageRecord* im = dataset.find_image(inst.image_id);
        rep.normalized_lengths.push_back(0.5 * (inst.bbox.w / im->width + inst.bbox.h / im->height));
        if (inst.keypoints && visible_keypoints(*inst.keypoints, keypoint_threshold).any()) ++rep.keypoint_instances;
    }
    if (face_boxes) {
        for (const auto& im : dataset.images()) {
            std::vector<InstanceAnnotation> here;
            for (const auto& inst : filtered)
                if (inst.image_id == im.id) here.push_back(inst);
            std::vector<FaceBox> boxes;
            for (const auto& fb : *face_boxes)
                if (fb.image_id == im.id) boxes.push_back(fb);
            rep.face_matches += match_faces(boxes, here, im.width, im.height).size();
        }
    }
    rep.cdf_defined = !rep.normalized_lengths.empty();
    for (int i = 1; i <= 100; ++i) {
        const double t = i / 100.0;
        rep.cdf_grid.push_back(t);
        rep.cdf.push_back(rep.cdf_at(t));
    }
    return rep;
}

std::vector<Violation> privacy_check(const Image8& original, const Image8& anonymized,
                                     std::span<const AnonymizationRegion> regions, Method method,
                                     std::span<const Rect> allowed_windows) {
    if (!(original.width() == anonymized.width() && original.height() == anonymized.height()))
        throw DimensionError("original and anonymized images differ in size");
    std::vector<Violation> out;
    const int rows = original.height(), cols = original.width();
    BitMask covered = BitMask::Zero(rows, cols);

    for (const auto& region : regions) {
        require_same_size(original, region.mask);
        covered = covered || region.mask;
        if (method == Method::maskout) {
            std::size_t bad = 0;
            for (int c = 0; c < 3; ++c)
                bad += (region.mask && (anonymized[c] != kMaskoutLevel)).count();
            if (bad)
                out.push_back({region.instance_id, "maskout-value", std::to_string(bad) + " samples differ from 127"});
            continue;
        }
        bool identical = true;
        for (int c = 0; c < 3 && identical; ++c) identical = !(region.mask && (anonymized[c] != original[c])).any();
        if (!identical) continue;
        const auto area = region.mask.count();
        if (area <= 4)
            out.push_back({region.instance_id, "region-unchanged", std::to_string(area) + " px region unchanged", true});
        else
            out.push_back({region.instance_id, "region-unchanged", "region is bit-identical to the original"});
    }

    if (method == Method::realistic)
        for (const auto& r : allowed_windows) {
            const int x0 = std::clamp(r.x, 0, cols), y0 = std::clamp(r.y, 0, rows);
            const int x1 = std::clamp(r.x + r.w, 0, cols), y1 = std::clamp(r.y + r.h, 0, rows);
            if (x1 > x0 && y1 > y0) covered.block(y0, x0, y1 - y0, x1 - x0).setConstant(true);
        }
    std::size_t outside = 0;
    for (int c = 0; c < 3; ++c) outside += (!covered && (anonymized[c] != original[c])).count();
    if (outside) out.push_back({std::nullopt, "outside-modified", std::to_string(outside) + " samples changed outside all regions"});
    return out;
}

int worker_count_from_env() {
    if (const char* env = std::getenv("ANONYPIPE_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

namespace {

void copy_into(const std::filesystem::path& src, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::filesystem::copy_file(src, dir / src.filename(), std::filesystem::copy_options::overwrite_existing);
}

void ensure_writable(const std::filesystem::path& root) {
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    const auto probe = root / ".anonypipe-write-probe";
    std::ofstream out(probe);
    if (ec || !out) throw std::runtime_error("output directory " + root.string() + " is not writable");
    out.close();
    std::filesystem::remove(probe, ec);
}

}  // namespace

RunSummary anonymize_dataset(const RunInputs& inputs, const AnonymizationConfig& config,
                             const std::filesystem::path& out_root, const BackendFactory& factory) {
    config.validate();
    ensure_writable(out_root);

    Dataset dataset = load_dataset(inputs.annotation_file, inputs.image_root);
    if (inputs.keypoints_file) dataset.attach_keypoints(load_keypoints(*inputs.keypoints_file));
    FaceBoxFile faces;
    if (inputs.faces_file) faces = load_face_boxes(*inputs.faces_file, dataset);
    if (config.target == RegionKind::face && !inputs.faces_file)
        throw std::invalid_argument("face anonymization needs a face-box sidecar (--faces)");

    const auto annotations_dir = out_root / "annotations";
    copy_into(inputs.annotation_file, annotations_dir);
    if (inputs.faces_file) copy_into(*inputs.faces_file, annotations_dir);
    if (inputs.keypoints_file) copy_into(*inputs.keypoints_file, annotations_dir);

    const bool realistic = config.method == Method::realistic;
    const BackendFactory make = factory ? factory : BackendFactory([&] { return open_backends(config.backends); });
    CenterTable centers;
    if (realistic && config.effective_truncation() == Truncation::multimodal) centers = estimate_centers(make().infos, config);

    const auto filtered = filter_instances(dataset, config.person_classes);
    const auto& images = dataset.images();
    std::vector<std::vector<ManifestEntry>> per_image(images.size());
    std::vector<std::string> failures;
    std::mutex failure_mutex;
    std::atomic<std::size_t> next{0}, written{0};

    auto worker = [&] {
        std::optional<BackendSet> backends;
        try {
            if (realistic) backends = make();
        } catch (const std::exception& e) {
            std::lock_guard lock(failure_mutex);
            failures.push_back(std::string("cannot open backends: ") + e.what());
            return;
        }
        for (std::size_t i = next++; i < images.size(); i = next++) {
            const ImageRecord& rec = images[i];
            std::vector<InstanceAnnotation> mine;
            for (const auto& inst : filtered)
                if (inst.image_id == rec.id) mine.push_back(inst);
            const auto out_path = out_root / "images" / rec.path;
            try {
                const ImageRegions regions = build_regions(rec, mine, faces.boxes, config);
                std::vector<ManifestEntry> entries = regions.skipped;
                const std::filesystem::path in_path = dataset.image_root() / rec.path;
                bool changed = false;
                if (!regions.regions.empty()) {
                    const Image8 pixels = dataset.load_pixels(rec);
                    ImageResult r = anonymize_image(pixels, rec.id, regions.regions, config,
                                                    backends ? &*backends : nullptr, &centers);
                    for (auto& e : r.entries) entries.push_back(std::move(e));
                    changed = !(r.image == pixels);
                    if (changed) write_image(out_path, r.image);
                }
                if (!changed) {
                    std::filesystem::create_directories(out_path.parent_path());
                    std::filesystem::copy_file(in_path, out_path, std::filesystem::copy_options::overwrite_existing);
                }
                std::sort(entries.begin(), entries.end(),
                          [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
                per_image[i] = std::move(entries);
                ++written;
            } catch (const std::exception& e) {
                std::vector<ManifestEntry> entries;
                for (const auto& inst : mine)
                    entries.push_back(skipped(rec.id, inst.id, config, std::string("image-error: ") + e.what()));
                per_image[i] = std::move(entries);
                // keep the tree complete: the unreadable input is mirrored byte for byte
                std::error_code ec;
                std::filesystem::create_directories(out_path.parent_path(), ec);
                if (std::filesystem::copy_file(dataset.image_root() / rec.path, out_path,
                                               std::filesystem::copy_options::overwrite_existing, ec))
                    ++written;
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(worker_count_from_env(), static_cast<int>(images.size())));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (!failures.empty()) throw std::runtime_error(failures.front());

    RunSummary summary;
    for (auto& entries : per_image)
        for (auto& e : entries) summary.manifest.push_back(std::move(e));
    summary.images_written = written;
    summary.face_box_warnings = faces.warnings;
    summary.report = dataset_report(dataset, inputs.faces_file ? &faces.boxes : nullptr, config.person_classes,
                                    config.keypoint_threshold);

    std::ofstream manifest(out_root / "manifest.jsonl");
    for (const auto& e : summary.manifest) manifest << e.to_json().dump() << '\n';
    std::ofstream report(out_root / "report.json");
    report << summary.report.to_json().dump(2) << '\n';
    if (!manifest || !report) throw std::runtime_error("failed writing manifest or report");
    return summary;
}

}  // namespace anonypipe
