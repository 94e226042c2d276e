#pragma once

#include "anonypipe/backend.hpp"
#include "anonypipe/crop.hpp"
#include "anonypipe/hmlo.hpp"
#include "anonypipe/latent.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace anonypipe {

enum class Method { maskout, blur, realistic };
enum class ContextFix { none, hm, hmlo };
enum class Truncation { none, standard, multimodal };

std::string to_string(Method m);
std::string to_string(ContextFix c);
std::string to_string(Truncation t);
Method parse_method(const std::string& s);
ContextFix parse_context_fix(const std::string& s);
Truncation parse_truncation(const std::string& s);
RegionKind parse_target(const std::string& s);

struct AnonymizationConfig {
    RegionKind target = RegionKind::face;
    Method method = Method::maskout;
    ContextFix context_fix = ContextFix::none;
    /// Unset picks the per-target default: multimodal for bodies, none for faces.
    std::optional<Truncation> truncation;
    double psi = 0.5;
    double blur_sigma = 7.0;
    /// Unset means the bbox-relative default radius.
    std::optional<int> dilation;
    std::uint64_t seed = 0;
    /// "builtin:toy" or "cmd:<shell command>".
    std::vector<std::string> backends{"builtin:toy"};
    int clusters = 8;
    int cluster_samples_per_center = 64;
    double crop_expansion = kDefaultCropExpansion;
    double keypoint_threshold = 0.30;
    HmloOptions hmlo;
    std::set<std::string> person_classes = default_person_classes();

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
    Truncation effective_truncation() const;
};

/// Instantiated generator sessions for one worker.
struct BackendSet {
    std::vector<std::unique_ptr<GeneratorBackend>> sessions;
    std::vector<BackendInfo> infos;
};

using BackendFactory = std::function<BackendSet()>;

/// Opens every configured backend spec. builtin:toy expands to the three toy backends.
BackendSet open_backends(const std::vector<std::string>& specs);

/// Cluster centers per backend name, estimated from seeded latent samples.
using CenterTable = std::map<std::string, ClusterCenters>;
CenterTable estimate_centers(const std::vector<BackendInfo>& infos, const AnonymizationConfig& config);

struct ManifestEntry {
    std::int64_t image_id = 0;
    std::int64_t instance_id = 0;
    RegionKind kind = RegionKind::body;
    Method method = Method::maskout;
    std::optional<std::string> backend;
    std::optional<std::uint64_t> latent_seed;
    ContextFix context_fix = ContextFix::none;
    std::optional<double> hmlo_final_loss;
    std::optional<int> hmlo_steps;
    std::optional<Rect> crop_rect;
    std::optional<std::string> skip_reason;

    bool processed() const { return !skip_reason; }
    nlohmann::json to_json() const;
    static ManifestEntry from_json(const nlohmann::json& j);
};

struct ImageRegions {
    std::vector<AnonymizationRegion> regions;
    std::vector<ManifestEntry> skipped;
};

/// Anonymization regions of one image from its filtered instances (and face boxes for faces).
ImageRegions build_regions(const ImageRecord& image, std::span<const InstanceAnnotation> filtered,
                           std::span<const FaceBox> face_boxes, const AnonymizationConfig& config);

struct ImageResult {
    Image8 image;
    std::vector<ManifestEntry> entries;
};

/// Processes regions one at a time in the order given (callers pass annotation-id order).
ImageResult anonymize_image(const Image8& image, std::int64_t image_id, std::span<const AnonymizationRegion> regions,
                            const AnonymizationConfig& config, BackendSet* backends, const CenterTable* centers);

struct DatasetReport {
    std::size_t total_instances = 0;
    std::size_t filtered_instances = 0;
    std::size_t face_matches = 0;
    std::size_t keypoint_instances = 0;
    /// Normalized average bbox side, mean(w / W, h / H), per filtered instance.
    std::vector<double> normalized_lengths;
    /// Empirical CDF at 0.01, 0.02, ..., 1.00.
    std::vector<double> cdf_grid, cdf;
    bool cdf_defined = false;

    double cdf_at(double t) const;
    nlohmann::json to_json() const;
};

DatasetReport dataset_report(const Dataset& dataset, const std::vector<FaceBox>* face_boxes,
                             const std::set<std::string>& person_classes = default_person_classes(),
                             double keypoint_threshold = 0.30);

struct Violation {
    std::optional<std::int64_t> instance_id;
    std::string rule;
    std::string detail;
    bool warning = false;
};

/// Checks an anonymized image against its regions. `allowed_windows` lists rectangles where pixels
/// outside the regions may legitimately change (soft-blend spill of realistic pastes).
std::vector<Violation> privacy_check(const Image8& original, const Image8& anonymized,
                                     std::span<const AnonymizationRegion> regions, Method method,
                                     std::span<const Rect> allowed_windows = {});

struct RunInputs {
    std::filesystem::path annotation_file;
    std::filesystem::path image_root;
    std::optional<std::filesystem::path> faces_file;
    std::optional<std::filesystem::path> keypoints_file;
};

struct RunSummary {
    std::vector<ManifestEntry> manifest;
    DatasetReport report;
    std::size_t images_written = 0;
    std::size_t face_box_warnings = 0;
};

/// End-to-end run: writes <out>/images/..., <out>/annotations/..., manifest.jsonl and report.json.
/// Worker count comes from ANONYPIPE_WORKERS (default: hardware concurrency).
RunSummary anonymize_dataset(const RunInputs& inputs, const AnonymizationConfig& config,
                             const std::filesystem::path& out_root, const BackendFactory& factory = {});

int worker_count_from_env();

}  // namespace anonypipe
