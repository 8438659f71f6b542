#pragma once

#include <string>
#include <vector>

#include "tabdistill/datagen.hpp"
#include "tabdistill/distill.hpp"
#include "tabdistill/evalharness.hpp"

namespace tabdistill {

struct SvgSeries {
  std::string name;
  std::vector<double> y;
};

/// Points of a dataset (small, faded) with optional synthetic objects on top
/// and an optional decision grid as background.
std::string scatter_svg(const Dataset* data, const SyntheticData* syn, const DecisionGrid* grid,
                        const std::string& title);

/// Line chart over x = 0..len-1.
std::string lines_svg(const std::vector<SvgSeries>& series, const std::string& title, const std::string& x_label,
                      const std::string& y_label);

}  // namespace tabdistill
