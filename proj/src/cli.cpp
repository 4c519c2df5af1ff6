#include "attnconv/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "attnconv/config.hpp"
#include "attnconv/dataset.hpp"
#include "attnconv/metrics.hpp"
#include "attnconv/synth.hpp"
#include "attnconv/trainer.hpp"

namespace attnconv {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string preset = "desk";
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    std::optional<double> threshold;
    std::string out;
};

void add_common(CLI::App* app, Common& c, bool with_threshold) {
    app->add_option("--config", c.config, "flat key=value config file");
    app->add_option("--preset", c.preset, "default values: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--set", c.overrides, "key=value override, repeatable");
    app->add_option("--seed", c.seed, "seed for every random stream");
    if (with_threshold) app->add_option("--threshold", c.threshold, "detection confidence threshold in [0,1]");
    app->add_option("--out", c.out, "output path")->required();
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = RunConfig::preset(c.preset);
    if (!c.config.empty()) cfg.load(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.seed = *c.seed;
    if (c.threshold) cfg.threshold = *c.threshold;
    cfg.finalize();
    return cfg;
}

std::string read_text(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::vector<SceneAnnotation> load_split(const fs::path& manifest, DatasetManifest* out = nullptr) {
    DatasetManifest m = DatasetManifest::load(manifest);
    auto scenes = load_scenes(m, manifest.parent_path());
    if (out) *out = std::move(m);
    return scenes;
}

void write_report(const fs::path& path, const EvalReport& r) {
    std::ostringstream os;
    r.write_csv(os);
    write_file_atomic(path, os.str());
    std::ostringstream pr;
    r.write_pr_csv(pr);
    fs::path prp = path;
    prp.replace_extension(".pr.csv");
    write_file_atomic(prp, pr.str());
}

std::string base64(const std::string& bytes) {
    static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        for (int k = 3; k >= 0; --k) out.push_back(tbl[(v >> (6 * k)) & 63]);
    }
    if (i < bytes.size()) {
        uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? tbl[(v >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

// 24-bit bottom-up BMP.
std::string encode_bmp(const Image& img) {
    const int row = (img.width * 3 + 3) & ~3;
    const uint32_t data_size = static_cast<uint32_t>(row * img.height);
    std::string b;
    const auto u16 = [&b](uint32_t v) { b.push_back(char(v & 0xff)), b.push_back(char((v >> 8) & 0xff)); };
    const auto u32 = [&](uint32_t v) { u16(v & 0xffff), u16(v >> 16); };
    b += "BM";
    u32(54 + data_size);
    u32(0);
    u32(54);
    u32(40);
    u32(static_cast<uint32_t>(img.width));
    u32(static_cast<uint32_t>(img.height));
    u16(1);
    u16(24);
    u32(0);
    u32(data_size);
    u32(2835);
    u32(2835);
    u32(0);
    u32(0);
    for (int y = img.height - 1; y >= 0; --y) {
        int written = 0;
        for (int x = 0; x < img.width; ++x)
            for (int c = 2; c >= 0; --c, ++written)
                b.push_back(static_cast<char>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0)));
        for (; written < row; ++written) b.push_back(0);
    }
    return b;
}

const char* category_color(int c) {
    static const char* colors[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4"};
    return colors[c % 5];
}

int cmd_synth(const Common& c, std::ostream& out) {
    RunConfig cfg = resolve(c);
    const fs::path dir = c.out;
    build_dataset(cfg.synth, cfg.counts, dir);
    write_file_atomic(dir / "config.txt", cfg.to_text());
    out << "wrote " << cfg.counts.train << "/" << cfg.counts.val << "/" << cfg.counts.test << " scenes to " << dir.string()
        << "\n";
    return kExitOk;
}

int cmd_augment(const Common& c, const std::string& manifest, int copies, std::ostream& out) {
    RunConfig cfg = resolve(c);
    const auto scenes = load_split(manifest);
    std::vector<SceneAnnotation> outs;
    for (int k = 0; k < copies; ++k)
        for (size_t i = 0; i < scenes.size(); ++i) {
            std::seed_seq seq{static_cast<uint32_t>(cfg.seed), static_cast<uint32_t>(cfg.seed >> 32), 17u,
                              static_cast<uint32_t>(k), static_cast<uint32_t>(i)};
            std::mt19937_64 rng(seq);
            outs.push_back(augment_pipeline(scenes[i], rng, cfg.train.policy, scenes));
        }
    const fs::path dir = c.out;
    save_scenes(outs, dir, "augmented").save(dir / "augmented.json");
    out << "wrote " << outs.size() << " augmented scenes to " << dir.string() << "\n";
    return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, std::ostream& out, bool quiet) {
    RunConfig cfg = resolve(c);
    const fs::path dir = c.out;
    fs::create_directories(dir);
    const auto train_set = load_split(fs::path(data) / "train.json");
    std::vector<SceneAnnotation> val_set;
    if (fs::exists(fs::path(data) / "val.json")) val_set = load_split(fs::path(data) / "val.json");
    write_file_atomic(dir / "config.txt", cfg.to_text());
    AttnConvNet model(cfg.model);
    TrainOptions opts;
    opts.out_dir = dir;
    opts.progress = quiet ? nullptr : &out;
    const TrainResult r = train(model, train_set, val_set, cfg.train, opts);
    if (r.aborted) {
        out << "training stopped: " << r.abort_reason << "\n";
        return kExitRuntime;
    }
    out << "trained " << r.log.size() << " epochs, final loss " << r.log.back().loss << "\n";
    return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& manifest, const std::string& dets_file,
             std::ostream& out) {
    RunConfig cfg = resolve(c);
    DatasetManifest m;
    const auto scenes = load_split(manifest, &m);
    EvalReport report;
    if (!dets_file.empty()) {
        const auto parsed = parse_detections_json(read_text(dets_file), m.labels, dets_file);
        std::map<std::string, int> index;
        for (size_t i = 0; i < scenes.size(); ++i) index[scenes[i].source_id] = static_cast<int>(i);
        std::vector<ScoredBox> d, g;
        for (const auto& [id, list] : parsed) {
            auto it = index.find(id);
            if (it == index.end()) throw ParseError(dets_file + ": unknown image id '" + id + "'");
            for (const auto& det : list) d.push_back(ScoredBox{it->second, det.category, det.box, det.confidence});
        }
        for (size_t i = 0; i < scenes.size(); ++i)
            for (const auto& comp : scenes[i].components)
                g.push_back(ScoredBox{static_cast<int>(i), comp.category, comp.box, 1.0});
        report = ap_over_thresholds(d, g, m.labels);
    } else {
        if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --detections");
        if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint);
        const AttnConvNet model = load_checkpoint(checkpoint);
        report = evaluate(model, scenes, cfg.threshold, m.labels, thread_budget());
    }
    write_report(c.out, report);
    out << "AP " << report.ap << " AP50 " << report.ap50 << " AP75 " << report.ap75 << "\n";
    return kExitOk;
}

int cmd_detect(const Common& c, const std::string& checkpoint, const std::string& manifest, bool svg,
               std::ostream& out) {
    RunConfig cfg = resolve(c);
    if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint);
    const AttnConvNet model = load_checkpoint(checkpoint);
    DatasetManifest m;
    const auto scenes = load_split(manifest, &m);
    const auto dets = detect_all(model, scenes, cfg.threshold, thread_budget());
    std::vector<std::string> ids;
    for (const auto& s : scenes) ids.push_back(s.source_id);
    const fs::path dir = c.out;
    write_file_atomic(dir / "detections.json", detections_json(ids, dets, m.labels));
    if (svg)
        for (size_t i = 0; i < scenes.size(); ++i)
            write_file_atomic(dir / "overlays" / (ids[i] + ".svg"), overlay_svg(scenes[i].image, dets[i], m.labels));
    size_t total = 0;
    for (const auto& d : dets) total += d.size();
    out << total << " detections over " << scenes.size() << " images\n";
    return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& axis, const std::vector<std::string>& values,
               const std::string& data, const std::string& split, std::ostream& out, bool quiet) {
    static const std::vector<std::string> axes{"variant", "n_blocks", "n_pred"};
    if (std::find(axes.begin(), axes.end(), axis) == axes.end())
        throw CLI::ValidationError("--axis", "unknown axis '" + axis + "' (expected variant, n_blocks or n_pred)");
    if (values.empty()) throw CLI::ValidationError("--values", "no values given");
    const RunConfig base = resolve(c);
    const auto train_set = load_split(fs::path(data) / "train.json");
    const auto test_set = load_split(fs::path(data) / (split + ".json"));

    std::ostringstream csv;
    csv << "config,params,AP,AP50,AP75\n";
    for (const auto& v : values) {
        RunConfig cfg = base;
        if (axis == "variant") {
            // ED-k selects the encoder-decoder variant with k encoder blocks.
            if (v.rfind("ED-", 0) == 0 || v.rfind("ed-", 0) == 0) {
                cfg.set("variant", "ed");
                cfg.set("encoder_layers", v.substr(3));
            } else {
                cfg.set("variant", v);
            }
        } else {
            cfg.set(axis, v);
        }
        cfg.finalize();
        AttnConvNet model(cfg.model);
        TrainOptions opts;
        opts.progress = quiet ? nullptr : &out;
        if (!quiet) out << "== " << axis << "=" << v << " (" << model.parameter_count() << " params)\n";
        const TrainResult r = train(model, train_set, {}, cfg.train, opts);
        if (r.aborted) {
            out << "configuration " << v << ": " << r.abort_reason << "\n";
            return kExitRuntime;
        }
        const EvalReport rep = evaluate(model, test_set, cfg.threshold, default_labels(), thread_budget());
        char line[256];
        std::snprintf(line, sizeof line, "%s,%lld,%.6f,%.6f,%.6f\n", v.c_str(),
                      static_cast<long long>(model.parameter_count()), rep.ap, rep.ap50, rep.ap75);
        csv << line;
        if (fs::path(c.out).has_parent_path()) fs::create_directories(fs::path(c.out).parent_path());
        std::string tag = v;
        std::replace(tag.begin(), tag.end(), '/', '_');
        fs::path ckpt = c.out;
        ckpt.replace_extension("");
        ckpt += "." + tag + ".ckpt";
        save_checkpoint(ckpt, model);
    }
    write_file_atomic(c.out, csv.str());
    out << csv.str();
    return kExitOk;
}

}  // namespace

std::string detections_json(const std::vector<std::string>& ids, const std::vector<std::vector<Detection>>& dets,
                            const std::vector<std::string>& labels) {
    ojson doc;
    doc["images"] = ojson::array();
    for (size_t i = 0; i < ids.size(); ++i) {
        ojson im;
        im["id"] = ids[i];
        im["detections"] = ojson::array();
        for (const auto& d : dets[i]) {
            ojson j;
            j["category"] = labels.at(static_cast<size_t>(d.category));
            j["cx"] = d.box.cx;
            j["cy"] = d.box.cy;
            j["w"] = d.box.w;
            j["h"] = d.box.h;
            j["confidence"] = d.confidence;
            j["slot"] = d.slot;
            im["detections"].push_back(std::move(j));
        }
        doc["images"].push_back(std::move(im));
    }
    return doc.dump(1) + "\n";
}

std::vector<std::pair<std::string, std::vector<Detection>>> parse_detections_json(const std::string& text,
                                                                                 const std::vector<std::string>& labels,
                                                                                 const std::string& source) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(source + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array())
        throw ParseError(source + ": missing 'images' array");
    std::vector<std::pair<std::string, std::vector<Detection>>> out;
    for (size_t i = 0; i < doc["images"].size(); ++i) {
        const auto& im = doc["images"][i];
        const std::string where = source + ": images[" + std::to_string(i) + "]";
        if (!im.is_object() || !im.contains("id") || !im["id"].is_string()) throw ParseError(where + ": missing 'id'");
        std::vector<Detection> list;
        if (im.contains("detections")) {
            for (size_t k = 0; k < im["detections"].size(); ++k) {
                const auto& j = im["detections"][k];
                const std::string dw = where + ".detections[" + std::to_string(k) + "]";
                try {
                    Detection d;
                    const std::string cat = j.at("category").get<std::string>();
                    const auto it = std::find(labels.begin(), labels.end(), cat);
                    if (it == labels.end()) throw ParseError(dw + ".category: '" + cat + "' is not in the label set");
                    d.category = static_cast<int>(it - labels.begin());
                    d.box = Box{j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("w").get<double>(),
                                j.at("h").get<double>()};
                    d.confidence = j.at("confidence").get<double>();
                    d.slot = j.value("slot", static_cast<int>(k));
                    list.push_back(d);
                } catch (const nlohmann::json::exception& e) {
                    throw ParseError(dw + ": " + e.what());
                }
            }
        }
        out.emplace_back(im["id"].get<std::string>(), std::move(list));
    }
    return out;
}

std::string overlay_svg(const Image& image, const std::vector<Detection>& dets, const std::vector<std::string>& labels) {
    const int W = image.width, H = image.height;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << " " << H << "\">\n";
    os << "<image width=\"" << W << "\" height=\"" << H << "\" href=\"data:image/bmp;base64," << base64(encode_bmp(image))
       << "\"/>\n";
    char buf[512];
    for (const auto& d : dets) {
        const char* color = category_color(d.category);
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"%s\" "
                      "stroke-width=\"1\"/>\n<text x=\"%.2f\" y=\"%.2f\" fill=\"%s\" font-size=\"7\">%s %.2f</text>\n",
                      d.box.x0() * W, d.box.y0() * H, d.box.w * W, d.box.h * H, color, d.box.x0() * W + 1,
                      d.box.y0() * H + 7, color, labels.at(static_cast<size_t>(d.category)).c_str(), d.confidence);
        os << buf;
    }
    os << "</svg>\n";
    return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"attnconv: set-prediction detector with cascading attention blocks"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress per-epoch progress");

    Common cs, ca, ct, ce, cd, cb;
    auto* synth = app.add_subcommand("synth", "build a synthetic dataset");
    add_common(synth, cs, false);

    std::string aug_manifest;
    int aug_copies = 1;
    auto* augment = app.add_subcommand("augment", "write an augmented copy of a manifest");
    add_common(augment, ca, false);
    augment->add_option("--manifest", aug_manifest, "input manifest")->required();
    augment->add_option("--copies", aug_copies, "augmented versions per image")->check(CLI::PositiveNumber);

    std::string train_data;
    auto* trainc = app.add_subcommand("train", "train a model");
    add_common(trainc, ct, false);
    trainc->add_option("--data", train_data, "dataset directory with train.json and val.json")->required();

    std::string eval_ckpt, eval_manifest, eval_dets;
    auto* evalc = app.add_subcommand("eval", "score a model or a detections file");
    add_common(evalc, ce, true);
    evalc->add_option("--checkpoint", eval_ckpt, "model checkpoint");
    evalc->add_option("--manifest", eval_manifest, "ground-truth manifest")->required();
    evalc->add_option("--detections", eval_dets, "detections JSON to score instead of running a model");

    std::string det_ckpt, det_manifest;
    bool det_svg = false;
    auto* detect = app.add_subcommand("detect", "write detections and overlays");
    add_common(detect, cd, true);
    detect->add_option("--checkpoint", det_ckpt, "model checkpoint")->required();
    detect->add_option("--manifest", det_manifest, "images to run on")->required();
    detect->add_flag("--svg", det_svg, "also write SVG overlays");

    std::string ab_axis, ab_data, ab_split = "test";
    std::vector<std::string> ab_values;
    auto* ablate = app.add_subcommand("ablate", "train and score a sweep of configurations");
    add_common(ablate, cb, true);
    ablate->add_option("--axis", ab_axis, "variant, n_blocks or n_pred")->required();
    ablate->add_option("--values", ab_values, "comma separated values")->delimiter(',')->required();
    ablate->add_option("--data", ab_data, "dataset directory")->required();
    ablate->add_option("--split", ab_split, "evaluation split name");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(cs, out);
        if (*augment) return cmd_augment(ca, aug_manifest, aug_copies, out);
        if (*trainc) return cmd_train(ct, train_data, out, quiet);
        if (*evalc) return cmd_eval(ce, eval_ckpt, eval_manifest, eval_dets, out);
        if (*detect) return cmd_detect(cd, det_ckpt, det_manifest, det_svg, out);
        if (*ablate) return cmd_ablate(cb, ab_axis, ab_values, ab_data, ab_split, out, quiet);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const TrainingAbort& e) {
        err << "aborted: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace attnconv
