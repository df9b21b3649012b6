#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "paramcrop/simulator.hpp"

namespace paramcrop {

// Three stacked panels (loss, IoU, normalized distance) against step, each a
// polyline with labeled axes. The x-axis spans [0, total_steps].
void write_metrics_svg(std::ostream& out, const MetricsLog& log, std::size_t total_steps,
                       const std::string& title);

}  // namespace paramcrop
