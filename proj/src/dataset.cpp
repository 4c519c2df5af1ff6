#include "attnconv/dataset.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace attnconv {

using ojson = nlohmann::ordered_json;

namespace {

int line_of_offset(const std::string& text, size_t offset) {
    int line = 1;
    for (size_t i = 0; i < offset && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

template <typename T>
T field(const ojson& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ParseError(where + "." + key + ": wrong type");
    }
}

}  // namespace

int DatasetManifest::category_index(const std::string& name) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == name) return static_cast<int>(i);
    return -1;
}

bool DatasetManifest::operator==(const DatasetManifest& o) const {
    if (labels != o.labels || images.size() != o.images.size() || annotations.size() != o.annotations.size())
        return false;
    for (size_t i = 0; i < images.size(); ++i) {
        const auto &a = images[i], &b = o.images[i];
        if (a.id != b.id || a.file != b.file || a.width != b.width || a.height != b.height) return false;
    }
    for (size_t i = 0; i < annotations.size(); ++i) {
        const auto &a = annotations[i], &b = o.annotations[i];
        if (a.image_id != b.image_id || a.category != b.category || !(a.box == b.box)) return false;
    }
    return true;
}

DatasetManifest DatasetManifest::parse(const std::string& text, const std::string& source) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
    }
    DatasetManifest m;
    if (!doc.is_object()) throw ParseError(source + ": top level must be an object");
    if (doc.contains("labels")) m.labels = field<std::vector<std::string>>(doc, "labels", source);
    if (!doc.contains("images") || !doc["images"].is_array()) throw ParseError(source + ": missing 'images' array");
    if (!doc.contains("annotations") || !doc["annotations"].is_array())
        throw ParseError(source + ": missing 'annotations' array");

    std::set<std::string> ids;
    for (size_t i = 0; i < doc["images"].size(); ++i) {
        const std::string where = source + ": images[" + std::to_string(i) + "]";
        const auto& j = doc["images"][i];
        ManifestImage im{field<std::string>(j, "id", where), field<std::string>(j, "file", where),
                         field<int>(j, "width", where), field<int>(j, "height", where)};
        if (im.width <= 0 || im.height <= 0) throw ParseError(where + ": non-positive image size");
        if (!ids.insert(im.id).second) throw ParseError(where + ".id: duplicate image id '" + im.id + "'");
        m.images.push_back(std::move(im));
    }
    for (size_t i = 0; i < doc["annotations"].size(); ++i) {
        const std::string where = source + ": annotations[" + std::to_string(i) + "]";
        const auto& j = doc["annotations"][i];
        ManifestAnnotation a;
        a.image_id = field<std::string>(j, "image_id", where);
        a.category = field<std::string>(j, "category", where);
        a.box = Box{field<double>(j, "cx", where), field<double>(j, "cy", where), field<double>(j, "w", where),
                    field<double>(j, "h", where)};
        if (!ids.count(a.image_id)) throw ParseError(where + ".image_id: unknown image '" + a.image_id + "'");
        if (m.category_index(a.category) < 0)
            throw ParseError(where + ".category: '" + a.category + "' is not in the label set");
        if (!box_in_unit_square(a.box)) throw ParseError(where + ": box outside [0,1]");
        if (!(a.box.w > 0.0 && a.box.h > 0.0)) throw ParseError(where + ": box needs positive width and height");
        m.annotations.push_back(std::move(a));
    }
    return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
}

std::string DatasetManifest::serialize() const {
    ojson doc;
    doc["labels"] = labels;
    doc["images"] = ojson::array();
    for (const auto& im : images) {
        ojson j;
        j["id"] = im.id;
        j["file"] = im.file;
        j["width"] = im.width;
        j["height"] = im.height;
        doc["images"].push_back(std::move(j));
    }
    doc["annotations"] = ojson::array();
    for (const auto& a : annotations) {
        ojson j;
        j["image_id"] = a.image_id;
        j["category"] = a.category;
        j["cx"] = a.box.cx;
        j["cy"] = a.box.cy;
        j["w"] = a.box.w;
        j["h"] = a.box.h;
        doc["annotations"].push_back(std::move(j));
    }
    return doc.dump(1) + "\n";
}

void DatasetManifest::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

std::vector<SceneAnnotation> load_scenes(const DatasetManifest& m, const std::filesystem::path& base_dir) {
    std::vector<SceneAnnotation> scenes;
    scenes.reserve(m.images.size());
    std::map<std::string, size_t> index;
    for (const auto& im : m.images) {
        SceneAnnotation s;
        s.image = read_ppm(base_dir / im.file);
        if (s.image.width != im.width || s.image.height != im.height)
            throw ParseError(im.file + ": size does not match manifest entry '" + im.id + "'");
        s.source_id = im.id;
        index[im.id] = scenes.size();
        scenes.push_back(std::move(s));
    }
    for (const auto& a : m.annotations) {
        const int c = m.category_index(a.category);
        scenes[index.at(a.image_id)].components.push_back(Component{c, a.box});
    }
    return scenes;
}

DatasetManifest save_scenes(const std::vector<SceneAnnotation>& scenes, const std::filesystem::path& base_dir,
                            const std::string& prefix, const std::vector<std::string>& labels) {
    std::filesystem::create_directories(base_dir / "images");
    DatasetManifest m;
    m.labels = labels;
    for (size_t i = 0; i < scenes.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%05zu", prefix.c_str(), i);
        const std::string rel = std::string("images/") + name + ".ppm";
        const auto tmp = base_dir / (rel + ".tmp");
        write_ppm(tmp, scenes[i].image);
        std::filesystem::rename(tmp, base_dir / rel);
        m.images.push_back(ManifestImage{name, rel, scenes[i].image.width, scenes[i].image.height});
        for (const auto& c : scenes[i].components)
            m.annotations.push_back(ManifestAnnotation{name, labels.at(static_cast<size_t>(c.category)), c.box});
    }
    return m;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    uint64_t h = 14695981039346656037ULL;
    char buf[4096];
    while (is) {
        is.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace attnconv
