#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnconv/augment.hpp"
#include "attnconv/box.hpp"

namespace attnconv {

class ParseError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct ManifestImage {
    std::string id;
    std::string file;  // relative to the manifest directory
    int width = 0;
    int height = 0;
};

struct ManifestAnnotation {
    std::string image_id;
    std::string category;
    Box box;
};

// JSON document:
// { "labels": [...], "images": [{id, file, width, height}],
//   "annotations": [{image_id, category, cx, cy, w, h}] }
struct DatasetManifest {
    std::vector<std::string> labels = {"rail", "clip", "bolt"};
    std::vector<ManifestImage> images;
    std::vector<ManifestAnnotation> annotations;

    static DatasetManifest parse(const std::string& text, const std::string& source = "<manifest>");
    static DatasetManifest load(const std::filesystem::path& path);
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    int category_index(const std::string& name) const;
    bool operator==(const DatasetManifest&) const;
};

// Reads every image of `m` (paths relative to `base_dir`) with its components.
std::vector<SceneAnnotation> load_scenes(const DatasetManifest& m, const std::filesystem::path& base_dir);

// Writes scenes as PPM files under base_dir/images and returns their manifest.
DatasetManifest save_scenes(const std::vector<SceneAnnotation>& scenes, const std::filesystem::path& base_dir,
                            const std::string& prefix, const std::vector<std::string>& labels = default_labels());

// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// FNV-1a over a file's bytes, hex encoded.
std::string file_hash(const std::filesystem::path& path);

}  // namespace attnconv
