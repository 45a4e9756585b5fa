#pragma once

#include <string>

#include "gwpk/analytic_diag.hpp"

namespace gwpk {

// Heatmap of values on the lattice (x across, xi upwards). With log_scale the
// colour encodes log10 of the value, clipped `decades` below the maximum.
std::string svg_heatmap(const Lattice& lat, const RVec& values, const std::string& title, bool log_scale = true,
                        double decades = 12.0);

// log|amplitude| against distance with the fitted line C - eps r.
std::string svg_decay_scatter(const RVec& r, const RVec& amplitude, const DecayFit& fit, const std::string& title);

// Two masks side by side.
std::string svg_masks(const RegionMask& before, const RegionMask& after, const std::string& title);

// 8-bit greyscale PNG, masked nodes white, xi increasing upwards.
void write_mask_png(const std::string& path, const RegionMask& m);

void write_text(const std::string& path, const std::string& content);

}  // namespace gwpk
