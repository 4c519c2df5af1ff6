#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "attnconv/augment.hpp"
#include "attnconv/heads.hpp"

namespace attnconv {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRuntime = 3 };

// Entry point of the attnconv tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// {"images": [{"id", "detections": [{category, cx, cy, w, h, confidence}]}]}
std::string detections_json(const std::vector<std::string>& ids, const std::vector<std::vector<Detection>>& dets,
                            const std::vector<std::string>& labels);
// Inverse of detections_json: per image id, the detections in file order.
std::vector<std::pair<std::string, std::vector<Detection>>> parse_detections_json(
    const std::string& text, const std::vector<std::string>& labels, const std::string& source = "<detections>");

// SVG with the image embedded as a base64 BMP and one labelled box per detection.
std::string overlay_svg(const Image& image, const std::vector<Detection>& dets, const std::vector<std::string>& labels);

}  // namespace attnconv
