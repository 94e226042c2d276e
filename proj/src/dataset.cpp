#include "anonypipe/dataset.hpp"

#include "anonypipe/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

namespace anonypipe {

using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

json parse_json(const std::string& text, const std::string& origin, std::size_t line_offset = 0) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError(origin + ": " + e.what(), line + line_offset, col);
    }
}

bool truthy(const json& j) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number()) return j.get<double>() != 0;
    return false;
}

Segmentation parse_segmentation(const json& seg, int width, int height) {
    if (seg.is_null()) return std::vector<Polygon>{};
    if (seg.is_array()) {
        std::vector<Polygon> polys;
        for (const auto& flat : seg) {
            if (!flat.is_array() || flat.size() % 2 != 0) throw ParseError("polygon must be a flat list of x, y pairs");
            Polygon poly;
            for (std::size_t i = 0; i < flat.size(); i += 2) poly.push_back({flat[i].get<double>(), flat[i + 1].get<double>()});
            polys.push_back(std::move(poly));
        }
        return polys;
    }
    if (seg.is_object()) {
        Rle rle;
        const auto& size = seg.at("size");
        rle.height = size.at(0).get<int>();
        rle.width = size.at(1).get<int>();
        const auto& counts = seg.at("counts");
        if (counts.is_string()) {
            rle.counts = decode_rle_string(counts.get<std::string>());
        } else {
            rle.counts = counts.get<std::vector<std::uint32_t>>();
        }
        if (rle.height != height || rle.width != width)
            throw ParseError("RLE size does not match image size");
        return rle;
    }
    throw ParseError("unsupported segmentation encoding");
}

Keypoints parse_keypoint_triples(const json& flat, bool coco_visibility) {
    if (!flat.is_array() || flat.size() != 3 * kNumKeypoints)
        throw ParseError("keypoints must hold exactly " + std::to_string(kNumKeypoints) + " (x, y, c) triples");
    Keypoints kps;
    for (int i = 0; i < kNumKeypoints; ++i) {
        const double third = flat[3 * i + 2].get<double>();
        double conf = coco_visibility ? (third > 0 ? 1.0 : 0.0) : third;
        if (conf < 0 || conf > 1) throw ParseError("keypoint confidence outside [0, 1]");
        kps[i] = {flat[3 * i].get<double>(), flat[3 * i + 1].get<double>(), conf};
    }
    return kps;
}

Box clamp_box(Box b, int width, int height) {
    const double x0 = std::clamp(b.x, 0.0, double(width));
    const double y0 = std::clamp(b.y, 0.0, double(height));
    const double x1 = std::clamp(b.x + b.w, 0.0, double(width));
    const double y1 = std::clamp(b.y + b.h, 0.0, double(height));
    return {x0, y0, std::max(0.0, x1 - x0), std::max(0.0, y1 - y0)};
}

Box parse_box(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ParseError("bbox must be [x, y, w, h]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

Dataset::Dataset(std::filesystem::path annotation_file, std::filesystem::path image_root,
                 std::vector<ImageRecord> images, std::vector<InstanceAnnotation> instances)
    : annotation_file_(std::move(annotation_file)), image_root_(std::move(image_root)),
      images_(std::move(images)), instances_(std::move(instances)) {
    for (std::size_t i = 0; i < images_.size(); ++i) {
        const auto& im = images_[i];
        if (im.width <= 0 || im.height <= 0)
            throw ParseError("image " + std::to_string(im.id) + " has non-positive dimensions");
        if (!image_index_.emplace(im.id, i).second) throw ParseError("duplicate image id " + std::to_string(im.id));
    }
    for (const auto& inst : instances_)
        if (!image_index_.count(inst.image_id))
            throw ParseError("annotation " + std::to_string(inst.id) + " references unknown image " +
                             std::to_string(inst.image_id));
}

const ImageRecord* Dataset::find_image(std::int64_t id) const {
    auto it = image_index_.find(id);
    return it == image_index_.end() ? nullptr : &images_[it->second];
}

std::vector<const InstanceAnnotation*> Dataset::instances_of(std::int64_t image_id) const {
    std::vector<const InstanceAnnotation*> out;
    for (const auto& inst : instances_)
        if (inst.image_id == image_id) out.push_back(&inst);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
    return out;
}

Image8 Dataset::load_pixels(const ImageRecord& rec) const {
    Image8 img = read_image(image_root_ / rec.path);
    if (img.width() != rec.width || img.height() != rec.height)
        throw ImageIoError(rec.path.string() + ": pixel size " + std::to_string(img.width()) + "x" +
                           std::to_string(img.height()) + " differs from annotation " + std::to_string(rec.width) +
                           "x" + std::to_string(rec.height));
    return img;
}

std::size_t Dataset::attach_keypoints(const std::map<std::int64_t, Keypoints>& by_instance) {
    std::size_t matched = 0;
    for (auto& inst : instances_) {
        auto it = by_instance.find(inst.id);
        if (it == by_instance.end()) continue;
        inst.keypoints = it->second;
        ++matched;
    }
    return by_instance.size() - matched;
}

Dataset load_dataset(const std::filesystem::path& annotation_file, const std::filesystem::path& image_root) {
    const std::string text = slurp(annotation_file);
    const json root = parse_json(text, annotation_file.string());

    std::vector<ImageRecord> images;
    std::vector<InstanceAnnotation> instances;
    std::map<std::int64_t, std::string> categories;
    try {
        if (root.contains("categories"))
            for (const auto& c : root.at("categories")) categories[c.at("id").get<std::int64_t>()] = c.value("name", "");

        for (const auto& im : root.at("images")) {
            ImageRecord rec;
            rec.id = im.at("id").get<std::int64_t>();
            rec.path = im.at("file_name").get<std::string>();
            rec.width = im.at("width").get<int>();
            rec.height = im.at("height").get<int>();
            images.push_back(std::move(rec));
        }
        std::map<std::int64_t, const ImageRecord*> dims;
        for (const auto& im : images) dims.emplace(im.id, &im);

        if (root.contains("annotations"))
            for (const auto& a : root.at("annotations")) {
                InstanceAnnotation inst;
                inst.id = a.at("id").get<std::int64_t>();
                inst.image_id = a.at("image_id").get<std::int64_t>();
                auto dim = dims.find(inst.image_id);
                if (dim == dims.end())
                    throw ParseError("annotation " + std::to_string(inst.id) + " references unknown image " +
                                     std::to_string(inst.image_id));
                const int w = dim->second->width, h = dim->second->height;
                const auto cat = a.at("category_id").get<std::int64_t>();
                auto name = categories.find(cat);
                inst.category = name != categories.end() ? name->second : std::to_string(cat);
                inst.segmentation = parse_segmentation(a.contains("segmentation") ? a.at("segmentation") : json(), w, h);
                inst.bbox = a.contains("bbox") ? clamp_box(parse_box(a.at("bbox")), w, h)
                                               : segmentation_box(inst.segmentation, w, h);
                inst.is_crowd = a.contains("iscrowd") && truthy(a.at("iscrowd"));
                inst.is_ignored = a.contains("ignore") && truthy(a.at("ignore"));
                if (a.contains("keypoints") && !a.at("keypoints").empty())
                    inst.keypoints = parse_keypoint_triples(a.at("keypoints"), true);
                instances.push_back(std::move(inst));
            }
    } catch (const json::exception& e) {
        throw ParseError(annotation_file.string() + ": " + e.what());
    }
    return Dataset(annotation_file, image_root, std::move(images), std::move(instances));
}

FaceBoxFile load_face_boxes(const std::filesystem::path& path, const Dataset& dataset) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    FaceBoxFile out;
    std::string line;
    std::size_t lineno = 0, order = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = parse_json(line, path.string(), lineno - 1);
        FaceBox fb;
        try {
            fb.image_id = j.at("image_id").get<std::int64_t>();
            fb.box = parse_box(j.at("bbox"));
            fb.score = j.at("score").get<double>();
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno, 1);
        }
        fb.order = order++;
        const ImageRecord* rec = dataset.find_image(fb.image_id);
        if (!(fb.score >= 0 && fb.score <= 1) || !rec) {
            ++out.warnings;
            continue;
        }
        fb.box = clamp_box(fb.box, rec->width, rec->height);
        if (fb.box.w <= 0 || fb.box.h <= 0) continue;
        out.boxes.push_back(fb);
    }
    return out;
}

std::map<std::int64_t, Keypoints> load_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    std::map<std::int64_t, Keypoints> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = parse_json(line, path.string(), lineno - 1);
        try {
            out[j.at("instance_id").get<std::int64_t>()] = parse_keypoint_triples(j.at("keypoints"), false);
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno, 1);
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what(), lineno, 1);
        }
    }
    return out;
}

KeypointVisibility visible_keypoints(const Keypoints& kps, double threshold) {
    KeypointVisibility bits;
    for (int i = 0; i < kNumKeypoints; ++i) bits[i] = kps[i].confidence >= threshold;
    return bits;
}

}  // namespace anonypipe
