#include "attnconv/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

namespace attnconv {

MatchResult match_detections(const std::vector<Box>& dets_sorted, const std::vector<Box>& gts, double iou_threshold) {
    MatchResult r;
    r.true_positive.assign(dets_sorted.size(), false);
    std::vector<bool> taken(gts.size(), false);
    for (size_t d = 0; d < dets_sorted.size(); ++d) {
        int best = -1;
        double best_iou = -1.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(dets_sorted[d], gts[g]);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[static_cast<size_t>(best)] = true;
            r.true_positive[d] = true;
        }
    }
    r.false_negatives = static_cast<int>(std::count(taken.begin(), taken.end(), false));
    return r;
}

std::vector<PrPoint> precision_recall_curve(const std::vector<bool>& flags, int n_gt) {
    std::vector<PrPoint> pts;
    if (n_gt <= 0) return pts;
    int tp = 0;
    for (size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) ++tp;
        const int fp = static_cast<int>(i + 1) - tp;
        pts.push_back({static_cast<double>(tp) / n_gt, static_cast<double>(tp) / (tp + fp)});
    }
    return pts;
}

std::optional<double> average_precision(const std::vector<bool>& flags, int n_gt) {
    if (n_gt <= 0) return std::nullopt;
    const auto pts = precision_recall_curve(flags, n_gt);
    // Right-to-left running max gives p_interp at every prefix.
    std::vector<double> interp(pts.size());
    double run = 0.0;
    for (size_t i = pts.size(); i-- > 0;) {
        run = std::max(run, pts[i].precision);
        interp[i] = run;
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].recall > prev_recall) {
            ap += (pts[i].recall - prev_recall) * interp[i];
            prev_recall = pts[i].recall;
        }
    }
    return ap;
}

std::array<double, kNumIouThresholds> iou_thresholds() {
    std::array<double, kNumIouThresholds> t{};
    for (int i = 0; i < kNumIouThresholds; ++i) t[i] = (50 + 5 * i) / 100.0;
    return t;
}

EvalReport ap_over_thresholds(const std::vector<ScoredBox>& dets, const std::vector<ScoredBox>& gts,
                              const std::vector<std::string>& labels) {
    EvalReport report;
    const auto thresholds = iou_thresholds();
    const int k = static_cast<int>(labels.size());

    for (int c = 0; c < k; ++c) {
        CategoryReport cr;
        cr.name = labels[static_cast<size_t>(c)];

        std::map<int, std::vector<Box>> gt_by_image;
        for (const auto& g : gts) {
            if (g.category != c) continue;
            gt_by_image[g.image].push_back(g.box);
            ++cr.n_gt;
        }
        std::vector<const ScoredBox*> cd;
        for (const auto& d : dets)
            if (d.category == c) cd.push_back(&d);
        // Ties keep input order so results do not depend on sort internals.
        std::stable_sort(cd.begin(), cd.end(),
                         [](const ScoredBox* a, const ScoredBox* b) { return a->confidence > b->confidence; });
        cr.n_det = static_cast<int>(cd.size());
        cr.present = cr.n_gt > 0;

        if (cr.present) {
            std::map<int, std::vector<size_t>> det_idx_by_image;
            for (size_t i = 0; i < cd.size(); ++i) det_idx_by_image[cd[i]->image].push_back(i);
            for (int t = 0; t < kNumIouThresholds; ++t) {
                std::vector<bool> flags(cd.size(), false);
                for (const auto& [img, idxs] : det_idx_by_image) {
                    auto git = gt_by_image.find(img);
                    if (git == gt_by_image.end()) continue;
                    std::vector<Box> boxes;
                    boxes.reserve(idxs.size());
                    for (size_t i : idxs) boxes.push_back(cd[i]->box);
                    const auto m = match_detections(boxes, git->second, thresholds[t]);
                    for (size_t j = 0; j < idxs.size(); ++j) flags[idxs[j]] = m.true_positive[j];
                }
                cr.ap_at[t] = *average_precision(flags, cr.n_gt);
                cr.curves[t] = precision_recall_curve(flags, cr.n_gt);
            }
            cr.ap = std::accumulate(cr.ap_at.begin(), cr.ap_at.end(), 0.0) / kNumIouThresholds;
            cr.ap50 = cr.ap_at[0];
            cr.ap75 = cr.ap_at[5];
            report.ap += cr.ap;
            report.ap50 += cr.ap50;
            report.ap75 += cr.ap75;
            ++report.present_categories;
        }
        report.categories.push_back(std::move(cr));
    }
    if (report.present_categories > 0) {
        report.ap /= report.present_categories;
        report.ap50 /= report.present_categories;
        report.ap75 /= report.present_categories;
    }
    return report;
}

namespace {
std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}
}  // namespace

void EvalReport::write_csv(std::ostream& os) const {
    os << "category,AP,AP50,AP75\n";
    for (const auto& c : categories) {
        if (!c.present) {
            os << c.name << ",absent,absent,absent\n";
            continue;
        }
        os << c.name << "," << fmt_real(c.ap) << "," << fmt_real(c.ap50) << "," << fmt_real(c.ap75) << "\n";
    }
    os << "__mean__," << fmt_real(ap) << "," << fmt_real(ap50) << "," << fmt_real(ap75) << "\n";
}

void EvalReport::write_pr_csv(std::ostream& os) const {
    const auto thresholds = iou_thresholds();
    os << "category,iou,recall,precision\n";
    for (const auto& c : categories) {
        if (!c.present) continue;
        for (int t = 0; t < kNumIouThresholds; ++t)
            for (const auto& p : c.curves[t])
                os << c.name << "," << fmt_real(thresholds[t]) << "," << fmt_real(p.recall) << ","
                   << fmt_real(p.precision) << "\n";
    }
}

}  // namespace attnconv
