#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "attnconv/cli.hpp"
#include "attnconv/dataset.hpp"
#include "attnconv/trainer.hpp"

using namespace attnconv;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(# small enough to train in seconds
synth_width=64
synth_height=64
input_width=64
input_height=64
train_count=6
val_count=2
test_count=4
channels=4,4,8,8,8
d=8
heads=2
n_blocks=1
ffn_hidden=16
n_pred=10
epochs=1
lr_drop_epoch=1
batch_size=2
eval_every=1
seed=7
)";

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("attnconv_test_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Parameter count by walking the checkpoint bytes directly: magic, version,
// config text, then (name, ndim, dims, values) per tensor.
int64_t checkpoint_param_count(const fs::path& p) {
    const std::string b = slurp(p);
    size_t pos = 8;
    const auto u64 = [&] {
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(static_cast<unsigned char>(b.at(pos + i))) << (8 * i);
        pos += 8;
        return v;
    };
    pos += u64();
    const uint64_t count = u64();
    int64_t total = 0;
    for (uint64_t k = 0; k < count; ++k) {
        pos += u64();
        const uint64_t nd = u64();
        int64_t n = 1;
        for (uint64_t i = 0; i < nd; ++i) n *= static_cast<int64_t>(u64());
        const uint64_t len = u64();
        CHECK(static_cast<int64_t>(len) == n);
        pos += len * 8;
        total += n;
    }
    return total;
}

struct Fixture {
    fs::path dir, cfg, data;
    Fixture() {
        dir = scratch("fixture");
        cfg = dir / "tiny.cfg";
        std::ofstream(cfg) << kTiny;
        data = dir / "data";
        REQUIRE(cli({"synth", "--config", cfg.string(), "--out", data.string()}).code == kExitOk);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST_CASE("synth writes manifests that round trip") {
    const auto& f = fixture();
    for (const char* split : {"train", "val", "test"}) {
        const fs::path m = f.data / (std::string(split) + ".json");
        REQUIRE(fs::exists(m));
        const auto a = DatasetManifest::load(m);
        CHECK(DatasetManifest::parse(a.serialize()).serialize() == a.serialize());
    }
    CHECK(DatasetManifest::load(f.data / "train.json").images.size() == 6);
    CHECK(DatasetManifest::load(f.data / "test.json").images.size() == 4);
}

TEST_CASE("train, eval and detect end to end") {
    const auto& f = fixture();
    const fs::path run = scratch("run");
    const Run t = cli({"-q", "train", "--config", f.cfg.string(), "--data", f.data.string(), "--out", run.string()});
    REQUIRE_MESSAGE(t.code == kExitOk, t.err);
    CHECK(fs::exists(run / "last.ckpt"));
    CHECK(fs::exists(run / "log.csv"));

    const fs::path report = run / "report.csv";
    const Run e = cli({"eval", "--config", f.cfg.string(), "--checkpoint", (run / "last.ckpt").string(), "--manifest",
                       (f.data / "test.json").string(), "--out", report.string()});
    REQUIRE_MESSAGE(e.code == kExitOk, e.err);
    CHECK(slurp(report).rfind("category,AP,AP50,AP75\n", 0) == 0);

    // A threshold of 1 admits nothing since scores are compared strictly.
    const fs::path det = run / "det";
    const Run d = cli({"detect", "--config", f.cfg.string(), "--checkpoint", (run / "last.ckpt").string(),
                       "--manifest", (f.data / "test.json").string(), "--threshold", "1.0", "--svg", "--out",
                       det.string()});
    REQUIRE_MESSAGE(d.code == kExitOk, d.err);
    const auto parsed = parse_detections_json(slurp(det / "detections.json"), default_labels(), "detections.json");
    CHECK(parsed.size() == 4);
    for (const auto& [id, list] : parsed) CHECK(list.empty());
    CHECK(fs::exists(det / "overlays"));
}

TEST_CASE("eval on ground truth as detections gives AP 1") {
    const auto& f = fixture();
    const fs::path run = scratch("perfect");
    const auto m = DatasetManifest::load(f.data / "test.json");
    std::vector<std::string> ids;
    std::vector<std::vector<Detection>> dets;
    for (const auto& im : m.images) {
        ids.push_back(im.id);
        dets.emplace_back();
        for (const auto& a : m.annotations) {
            if (a.image_id != im.id) continue;
            Detection d;
            d.category = static_cast<int>(std::find(m.labels.begin(), m.labels.end(), a.category) - m.labels.begin());
            d.box = a.box;
            d.confidence = 0.9;
            d.slot = static_cast<int>(dets.back().size());
            dets.back().push_back(d);
        }
    }
    write_file_atomic(run / "gt.json", detections_json(ids, dets, m.labels));
    const Run e = cli({"eval", "--config", f.cfg.string(), "--manifest", (f.data / "test.json").string(),
                       "--detections", (run / "gt.json").string(), "--out", (run / "r.csv").string()});
    REQUIRE_MESSAGE(e.code == kExitOk, e.err);
    std::istringstream csv(slurp(run / "r.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto c = line.find(',');
        CHECK_MESSAGE(line.substr(c + 1) == "1.000000,1.000000,1.000000", line);
        ++rows;
    }
    CHECK(rows >= 2);
}

TEST_CASE("ablate over n_pred emits one row per value with walked parameter counts") {
    const auto& f = fixture();
    const fs::path run = scratch("ablate");
    const fs::path csv = run / "sweep.csv";
    const Run a = cli({"-q", "ablate", "--config", f.cfg.string(), "--axis", "n_pred", "--values", "10,50", "--data",
                       f.data.string(), "--out", csv.string()});
    REQUIRE_MESSAGE(a.code == kExitOk, a.err);
    std::istringstream is(slurp(csv));
    std::string line;
    std::getline(is, line);
    CHECK(line == "config,params,AP,AP50,AP75");
    std::vector<std::pair<std::string, int64_t>> rows;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string cfg, params;
        std::getline(ls, cfg, ',');
        std::getline(ls, params, ',');
        rows.emplace_back(cfg, std::stoll(params));
    }
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].first == "10");
    CHECK(rows[1].first == "50");
    for (const auto& [cfg, params] : rows) CHECK(params == checkpoint_param_count(run / ("sweep." + cfg + ".ckpt")));
    // Only the slot embedding grows with n_pred.
    CHECK(rows[1].second - rows[0].second == 40 * 8);
}

TEST_CASE("ablate variant rows: w/o-FFN has fewer parameters") {
    const auto& f = fixture();
    const fs::path run = scratch("variant");
    const Run a = cli({"-q", "ablate", "--config", f.cfg.string(), "--axis", "variant", "--values", "full,w/o-FFN",
                       "--data", f.data.string(), "--out", (run / "v.csv").string()});
    REQUIRE_MESSAGE(a.code == kExitOk, a.err);
    CHECK(checkpoint_param_count(run / "v.w_o-FFN.ckpt") < checkpoint_param_count(run / "v.full.ckpt"));
}

TEST_CASE("exit codes") {
    const auto& f = fixture();
    const fs::path run = scratch("codes");
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({"synth"}).code == kExitUsage);
    CHECK(cli({"synth", "--set", "lr", "--out", run.string()}).code == kExitUsage);
    CHECK(cli({"synth", "--set", "no_such_key=1", "--out", run.string()}).code == kExitUsage);
    CHECK(cli({"ablate", "--config", f.cfg.string(), "--axis", "colour", "--values", "a", "--data", f.data.string(),
               "--out", (run / "x.csv").string()})
              .code == kExitUsage);

    const Run missing = cli({"eval", "--checkpoint", (run / "none.ckpt").string(), "--manifest",
                             (f.data / "test.json").string(), "--out", (run / "r.csv").string()});
    CHECK(missing.code == kExitData);
    CHECK(missing.err.find("none.ckpt") != std::string::npos);

    write_file_atomic(run / "bad.json", "{\n \"images\": [\n  {\"id\": 3}\n");
    const Run bad = cli({"eval", "--detections", (run / "bad.json").string(), "--manifest", (run / "bad.json").string(),
                         "--out", (run / "r.csv").string()});
    CHECK(bad.code == kExitData);
    CHECK(bad.err.find("bad.json") != std::string::npos);

    // An exploding learning rate drives the loss to infinity and aborts.
    const Run boom = cli({"-q", "train", "--config", f.cfg.string(), "--set", "lr=1e30", "--set", "grad_clip=0",
                          "--set", "epochs=3", "--data", f.data.string(), "--out", (run / "boom").string()});
    CHECK_MESSAGE(boom.code == kExitRuntime, boom.out << boom.err);
}

TEST_CASE("the installed binary reports the same exit codes") {
    const std::string bin = ATTNCONV_CLI_PATH;
    CHECK(std::system((bin + " > /dev/null 2>&1").c_str()) != 0);
    CHECK(WEXITSTATUS(std::system((bin + " synth > /dev/null 2>&1").c_str())) == kExitUsage);
    CHECK(WEXITSTATUS(std::system((bin + " --help > /dev/null 2>&1").c_str())) == kExitOk);
}

TEST_CASE("synth is reproducible byte for byte") {
    const auto& f = fixture();
    const fs::path again = scratch("again");
    REQUIRE(cli({"synth", "--config", f.cfg.string(), "--out", again.string()}).code == kExitOk);
    for (const char* name : {"train.json", "val.json", "test.json", "config.txt"})
        CHECK(file_hash(again / name) == file_hash(f.data / name));
    const auto m = DatasetManifest::load(again / "train.json");
    for (const auto& im : m.images) CHECK(file_hash(again / im.file) == file_hash(f.data / im.file));
}
