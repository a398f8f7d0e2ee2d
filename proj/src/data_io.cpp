#include "lmk/data_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lmk/errors.hpp"
#include "lmk/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lmk {

const ManifestEntry& DatasetManifest::entry_by_id(const std::string& id) const {
    for (const ManifestEntry& e : entries)
        if (e.id == id) return e;
    throw std::invalid_argument("manifest: unknown image id " + id);
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    json j;
    j["format"] = "lmk-dataset-v1";
    j["preprocess"] = manifest.preprocess;
    if (!manifest.annotations_path.empty()) j["annotations"] = manifest.annotations_path;
    if (!manifest.masks_dir.empty()) j["masks_dir"] = manifest.masks_dir;
    j["images"] = json::array();
    for (const ManifestEntry& e : manifest.entries)
        j["images"].push_back({{"id", e.id}, {"path", e.path}});
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("load_manifest: ") + e.what(), 0);
    }
    DatasetManifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    m.preprocess = j.value("preprocess", "none");
    if (m.preprocess != "none" && m.preprocess != "face_crop_136_96")
        throw SchemaError("load_manifest: unknown preprocess mode " + m.preprocess);
    m.annotations_path = j.value("annotations", "");
    m.masks_dir = j.value("masks_dir", "");

    std::set<std::string> seen;
    for (const json& e : j.at("images")) {
        ManifestEntry entry{e.at("id").get<std::string>(), e.at("path").get<std::string>()};
        if (!seen.insert(entry.id).second)
            throw SchemaError("load_manifest: duplicate image id " + entry.id);
        if (!fs::exists(fs::path(m.root) / entry.path))
            throw SchemaError("load_manifest: missing file " + entry.path);
        m.entries.push_back(std::move(entry));
    }
    if (!m.annotations_path.empty() && !fs::exists(fs::path(m.root) / m.annotations_path))
        throw SchemaError("load_manifest: missing annotation file " + m.annotations_path);
    return m;
}

Image load_dataset_image(const DatasetManifest& manifest, const std::string& id) {
    const ManifestEntry& e = manifest.entry_by_id(id);
    Image img = read_png((fs::path(manifest.root) / e.path).string());
    if (manifest.preprocess == "face_crop_136_96") img = resize_center_crop(img, 136, 96);
    return img;
}

Image load_dataset_mask(const DatasetManifest& manifest, const std::string& id) {
    if (manifest.masks_dir.empty())
        throw std::invalid_argument("load_dataset_mask: manifest has no masks");
    const ManifestEntry& e = manifest.entry_by_id(id);
    const std::string name = fs::path(e.path).filename().string();
    return read_png((fs::path(manifest.root) / manifest.masks_dir / name).string());
}

std::vector<LandmarkSet> load_annotations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_annotations: cannot open " + path);

    std::string line;
    if (!std::getline(f, line)) throw ParseError("load_annotations: empty file", 1);
    std::vector<std::string> header;
    {
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) header.push_back(tok);
    }
    if (header.empty() || header[0] != "image")
        throw ParseError("load_annotations: header must start with 'image'", 1);
    if ((header.size() - 1) % 3 != 0)
        throw SchemaError("load_annotations: header columns do not form x,y,v triplets");
    const int L = int((header.size() - 1) / 3);
    for (int l = 0; l < L; ++l) {
        const std::string n = std::to_string(l + 1);
        if (header[1 + 3 * l] != "x" + n || header[2 + 3 * l] != "y" + n ||
            header[3 + 3 * l] != "v" + n)
            throw SchemaError("load_annotations: header landmark columns inconsistent");
    }

    std::vector<LandmarkSet> out;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<std::string> fields;
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (int(fields.size()) != 1 + 3 * L)
            throw ParseError("load_annotations: expected " + std::to_string(1 + 3 * L) +
                                 " fields, got " + std::to_string(fields.size()),
                             lineno);
        LandmarkSet lm;
        lm.image_id = fields[0];
        for (int l = 0; l < L; ++l) {
            double x, y;
            int v;
            try {
                x = std::stod(fields[1 + 3 * l]);
                y = std::stod(fields[2 + 3 * l]);
                v = std::stoi(fields[3 + 3 * l]);
            } catch (...) {
                throw ParseError("load_annotations: non-numeric landmark field", lineno);
            }
            if (v != 0 && v != 1)
                throw ParseError("load_annotations: visibility must be 0 or 1", lineno);
            lm.points.push_back({x, y});
            lm.visible.push_back(uint8_t(v));
        }
        out.push_back(std::move(lm));
    }
    return out;
}

void save_annotations(const std::vector<LandmarkSet>& annotations, const std::string& path) {
    if (annotations.empty()) throw std::invalid_argument("save_annotations: empty set");
    const int L = annotations[0].count();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_annotations: cannot open " + path);
    f << "image";
    for (int l = 1; l <= L; ++l) f << ",x" << l << ",y" << l << ",v" << l;
    f << "\n";
    f.precision(10);
    for (const LandmarkSet& lm : annotations) {
        if (lm.count() != L) throw SchemaError("save_annotations: inconsistent landmark count");
        f << lm.image_id;
        for (int l = 0; l < L; ++l)
            f << ',' << lm.points[l].x << ',' << lm.points[l].y << ',' << int(lm.visible[l]);
        f << "\n";
    }
}

}  // namespace lmk
