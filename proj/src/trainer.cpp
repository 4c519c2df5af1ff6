#include "attnconv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "attnconv/config.hpp"
#include "attnconv/dataset.hpp"
#include "attnconv/synth.hpp"

namespace attnconv {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (lr_drop_epoch < 0 || lr_drop_epoch > epochs) throw ConfigError("lr_drop_epoch must lie in [0, epochs]");
    if (!(lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be nonnegative");
    if (eval_every < 0) throw ConfigError("eval_every must be nonnegative");
}

double TrainConfig::lr_at(int epoch) const { return epoch > lr_drop_epoch ? lr * lr_drop_factor : lr; }

void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v, int64_t t,
                  double lr, const TrainConfig& cfg) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= lr * cfg.weight_decay * p[i];
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
}

void adamw_step(const NamedParams& params, AdamState& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(static_cast<size_t>(params[i].second.size()), 0.0);
            state.v[i].assign(static_cast<size_t>(params[i].second.size()), 0.0);
        }
    }
    for (const auto& [name, t] : params)
        for (double g : t.grad())
            if (!std::isfinite(g)) throw TrainingAbort("non-finite gradient in parameter '" + name + "'");
    ++state.step;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].second;
        const std::vector<double> g = t.grad();
        if (state.m[i].size() != g.size())
            throw DimensionError("optimizer state for '" + params[i].first + "' has the wrong size");
        adamw_update(t.data(), g, state.m[i], state.v[i], state.step, lr, cfg);
    }
}

double clip_grad_norm(const NamedParams& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : params)
        if (t.has_grad())
            for (double g : const_cast<Tensor&>(t).grad_mut()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& [name, t] : params)
            if (t.has_grad())
                for (double& g : const_cast<Tensor&>(t).grad_mut()) g *= s;
    }
    return norm;
}

double dataset_loss(const AttnConvNet& model, const std::vector<SceneAnnotation>& scenes, const LossWeights& w) {
    if (scenes.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : scenes) {
        const PredictionSet p = model.forward(s.image, Mode::Eval);
        total += total_loss(p, s.components, match_predictions(p, s.components, w), w).item();
    }
    return total / static_cast<double>(scenes.size());
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void zero_grads(const NamedParams& params) {
    for (const auto& [name, t] : params) const_cast<Tensor&>(t).zero_grad();
}

std::mt19937_64 stream(uint64_t seed, uint32_t tag, uint32_t a, uint32_t b = 0) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), tag, a, b};
    return std::mt19937_64(seq);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) { write_file_atomic(path, text); }

}  // namespace

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
    os << "epoch,step,loss,lr,val_AP\n";
    for (const auto& e : log) {
        os << e.epoch << "," << e.step << "," << (e.infinite_loss ? std::string("inf") : fmt(e.loss)) << ","
           << fmt(e.lr) << ",";
        if (e.val_ap) os << fmt(*e.val_ap);
        os << "\n";
    }
}

TrainResult train(AttnConvNet& model, const std::vector<SceneAnnotation>& train_set,
                  const std::vector<SceneAnnotation>& val_set, const TrainConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("training set is empty");
    const NamedParams params = model.parameters();
    AdamState state;
    TrainResult result;
    std::mt19937_64 dropout_rng = stream(cfg.seed, 1, 0);

    const auto flush_log = [&] {
        if (!opts.out_dir) return;
        std::ostringstream os;
        write_log_csv(os, result.log);
        write_text_atomic(*opts.out_dir / "log.csv", os.str());
    };

    std::vector<size_t> order(train_set.size());
    for (int epoch = 1; epoch <= cfg.epochs && !result.aborted; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto shuffle_rng = stream(cfg.seed, 2, static_cast<uint32_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            zero_grads(params);
            Tensor batch_loss;
            double batch_value = 0.0;
            bool infinite = false;
            for (size_t k = start; k < stop; ++k) {
                const size_t idx = order[k];
                SceneAnnotation scene = train_set[idx];
                if (cfg.augment) {
                    auto aug_rng = stream(cfg.seed, 3, static_cast<uint32_t>(epoch), static_cast<uint32_t>(idx));
                    scene = augment_pipeline(scene, aug_rng, cfg.policy, train_set);
                }
                if (static_cast<int>(scene.components.size()) > model.n_pred())
                    scene.components.resize(static_cast<size_t>(model.n_pred()));
                const PredictionSet p = model.forward(scene.image, Mode::Train, &dropout_rng);
                const Tensor l = total_loss(p, scene.components, match_predictions(p, scene.components, cfg.loss),
                                            cfg.loss);
                if (!std::isfinite(l.item())) {
                    infinite = true;
                    break;
                }
                batch_value += l.item();
                batch_loss = batch_loss.node() && batch_loss.size() ? add(batch_loss, l) : l;
            }
            if (infinite) {
                result.aborted = true;
                result.abort_reason = "infinite loss at epoch " + std::to_string(epoch);
                EpochLog e{epoch, state.step, 0.0, lr, std::nullopt, true};
                result.log.push_back(e);
                break;
            }
            const double n = static_cast<double>(stop - start);
            backward(scale(batch_loss, 1.0 / n));
            if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
            adamw_step(params, state, lr, cfg);
            epoch_loss += batch_value;
            seen += stop - start;
        }
        zero_grads(params);
        if (result.aborted) break;

        EpochLog e;
        e.epoch = epoch;
        e.step = state.step;
        e.loss = epoch_loss / static_cast<double>(seen);
        e.lr = lr;
        const bool eval_now =
            cfg.eval_every > 0 && !val_set.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        if (eval_now) {
            e.val_ap = evaluate(model, val_set, cfg.eval_threshold).ap;
            if (*e.val_ap > result.best_val_ap) {
                result.best_val_ap = *e.val_ap;
                result.best_epoch = epoch;
                if (opts.out_dir) save_checkpoint(*opts.out_dir / "best.ckpt", model);
            }
        }
        result.log.push_back(e);
        if (opts.progress) {
            *opts.progress << "epoch " << epoch << " loss " << e.loss << " lr " << lr;
            if (e.val_ap) *opts.progress << " val_AP " << *e.val_ap;
            *opts.progress << "\n";
        }
        if (opts.out_dir) save_checkpoint(*opts.out_dir / "last.ckpt", model, &state);
        flush_log();
    }
    flush_log();
    return result;
}

std::vector<std::vector<Detection>> detect_all(const AttnConvNet& model, const std::vector<SceneAnnotation>& scenes,
                                               double conf_threshold, int threads) {
    std::vector<std::vector<Detection>> out(scenes.size());
    const auto work = [&](size_t begin, size_t step) {
        for (size_t i = begin; i < scenes.size(); i += step)
            out[i] = decode_detections(model.forward(scenes[i].image, Mode::Eval), conf_threshold);
    };
    const size_t n = std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(threads, 1)), scenes.size()));
    if (n == 1) {
        work(0, 1);
        return out;
    }
    std::vector<std::thread> pool;
    for (size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
    for (auto& th : pool) th.join();
    return out;
}

EvalReport evaluate(const AttnConvNet& model, const std::vector<SceneAnnotation>& scenes, double conf_threshold,
                    const std::vector<std::string>& labels, int threads) {
    const auto dets = detect_all(model, scenes, conf_threshold, threads);
    std::vector<ScoredBox> d, g;
    for (size_t i = 0; i < scenes.size(); ++i) {
        for (const auto& det : dets[i]) d.push_back(ScoredBox{static_cast<int>(i), det.category, det.box, det.confidence});
        for (const auto& c : scenes[i].components) g.push_back(ScoredBox{static_cast<int>(i), c.category, c.box, 1.0});
    }
    return ap_over_thresholds(d, g, labels);
}

// --- checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'C', 'N', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}
void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out += s;
}
void put_array(std::string& out, std::span<const double> a) {
    put_u64(out, a.size());
    for (double d : a) put_f64(out, d);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string where;

    void need(size_t n) {
        if (pos + n > buf.size()) throw TrainingAbort(where + ": truncated checkpoint");
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        const uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const uint64_t n = u64();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<double> array() {
        const uint64_t n = u64();
        need(n * 8);
        std::vector<double> a(n);
        for (auto& d : a) d = f64();
        return a;
    }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AttnConvNet& model, const AdamState* state) {
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_str(out, model_config_text(model.config()));
    const NamedParams params = model.parameters();
    put_u64(out, params.size());
    for (const auto& [name, t] : params) {
        put_str(out, name);
        put_u64(out, t.ndim());
        for (int64_t d : t.shape()) put_u64(out, static_cast<uint64_t>(d));
        put_array(out, t.data());
    }
    const bool with_state = state && state->m.size() == params.size();
    put_u32(out, with_state ? 1u : 0u);
    if (with_state) {
        put_u64(out, static_cast<uint64_t>(state->step));
        for (size_t i = 0; i < params.size(); ++i) {
            put_array(out, state->m[i]);
            put_array(out, state->v[i]);
        }
    }
    write_file_atomic(path, out);
}

AttnConvNet load_checkpoint(const std::filesystem::path& path, AdamState* state) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string buf = ss.str();
    Reader r{buf, 0, path.string()};
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw TrainingAbort(path.string() + ": not a checkpoint file");
    r.pos = 4;
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw TrainingAbort(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    AttnConvNet model(parse_model_config(r.str()));
    const NamedParams params = model.parameters();
    const uint64_t count = r.u64();
    if (count != params.size())
        throw TrainingAbort(path.string() + ": parameter count " + std::to_string(count) + " does not match the model");
    for (const auto& [name, t] : params) {
        const std::string stored = r.str();
        if (stored != name) throw TrainingAbort(path.string() + ": expected parameter '" + name + "', found '" + stored + "'");
        const uint64_t nd = r.u64();
        Shape shape(nd);
        for (auto& d : shape) d = static_cast<int64_t>(r.u64());
        if (shape != t.shape())
            throw TrainingAbort(path.string() + ": parameter '" + name + "' has shape " + shape_str(shape));
        const auto values = r.array();
        auto dst = const_cast<Tensor&>(t).data();
        std::copy(values.begin(), values.end(), dst.begin());
    }
    AdamState st;
    if (r.u32()) {
        st.step = static_cast<int64_t>(r.u64());
        for (size_t i = 0; i < params.size(); ++i) {
            st.m.push_back(r.array());
            st.v.push_back(r.array());
        }
    }
    if (r.pos != buf.size()) throw TrainingAbort(path.string() + ": trailing bytes after checkpoint");
    if (state) *state = std::move(st);
    return model;
}

int thread_budget() {
    const char* env = std::getenv("ATTNCONV_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

}  // namespace attnconv
