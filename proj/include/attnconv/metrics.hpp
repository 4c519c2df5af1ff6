#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attnconv/box.hpp"

namespace attnconv {

// Detection or ground truth tagged with the image it belongs to.
struct ScoredBox {
    int image = 0;
    int category = 0;
    Box box;
    double confidence = 1.0;
};

struct MatchResult {
    std::vector<bool> true_positive;  // one flag per detection, input order
    int false_negatives = 0;
};

// Greedy matching of confidence-sorted detections against one image's
// ground truths of one category: each detection takes the highest-IoU
// unmatched ground truth with IoU ≥ threshold.
MatchResult match_detections(const std::vector<Box>& dets_sorted, const std::vector<Box>& gts, double iou_threshold);

// Area under the interpolated precision/recall staircase:
//   Σ_n (r_{n+1} − r_n)·max_{r̃ ≥ r_{n+1}} p(r̃)
// over the distinct recall levels reached, with r_0 = 0. nullopt when n_gt = 0.
std::optional<double> average_precision(const std::vector<bool>& flags, int n_gt);

struct PrPoint {
    double recall;
    double precision;
};

std::vector<PrPoint> precision_recall_curve(const std::vector<bool>& flags, int n_gt);

inline constexpr int kNumIouThresholds = 10;
std::array<double, kNumIouThresholds> iou_thresholds();

struct CategoryReport {
    std::string name;
    int n_gt = 0;
    int n_det = 0;
    bool present = false;  // false when the category has no ground truths
    std::array<double, kNumIouThresholds> ap_at{};  // per IoU threshold
    double ap = 0.0;
    double ap50 = 0.0;
    double ap75 = 0.0;
    std::array<std::vector<PrPoint>, kNumIouThresholds> curves;
};

struct EvalReport {
    std::vector<CategoryReport> categories;
    double ap = 0.0;
    double ap50 = 0.0;
    double ap75 = 0.0;
    int present_categories = 0;

    void write_csv(std::ostream& os) const;
    void write_pr_csv(std::ostream& os) const;
};

// AP averaged over IoU ∈ {0.50, 0.55, …, 0.95} per category, then the
// unweighted mean over categories that have ground truths.
EvalReport ap_over_thresholds(const std::vector<ScoredBox>& dets, const std::vector<ScoredBox>& gts,
                              const std::vector<std::string>& labels);

}  // namespace attnconv
