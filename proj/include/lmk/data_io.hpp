#pragma once

#include <string>
#include <vector>

#include "lmk/image.hpp"
#include "lmk/landmarks.hpp"

namespace lmk {

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest's directory
};

struct DatasetManifest {
    std::string root;  // directory containing the manifest file
    std::vector<ManifestEntry> entries;
    std::string annotations_path;  // relative, empty when absent
    std::string masks_dir;         // relative, empty when absent
    std::string preprocess = "none";  // none | face_crop_136_96

    const ManifestEntry& entry_by_id(const std::string& id) const;
};

void save_manifest(const DatasetManifest& manifest, const std::string& path);
// Validates that every referenced file exists and ids are unique.
DatasetManifest load_manifest(const std::string& path);

// Loads and applies the manifest's preprocessing mode.
Image load_dataset_image(const DatasetManifest& manifest, const std::string& id);
Image load_dataset_mask(const DatasetManifest& manifest, const std::string& id);

// CSV with header image,x1,y1,v1,...,xL,yL,vL; coordinates in pixels.
std::vector<LandmarkSet> load_annotations(const std::string& path);
void save_annotations(const std::vector<LandmarkSet>& annotations, const std::string& path);

}  // namespace lmk
