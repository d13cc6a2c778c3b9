#pragma once

#include <span>

#include "pspred/envgen.hpp"
#include "pspred/rti.hpp"

namespace pspred {

/// Four stacked grid images: transmitter one-hot, query mask, RTI map, link shading.
struct InputTensor {
  Image x1;
  Image x2;
  Image x3;
  Image x4;

  int width() const { return x1.width; }
  int height() const { return x1.height; }
  const Image& channel(int c) const;
};

/// Builds the network input for one transmitter and its query points. `x3` is the map image
/// of `slf`; the tx voxel must be valid.
InputTensor assemble_input_tensor(Point tx, std::span<const Point> queries, const Image& x3,
                                  const SlfEstimate& slf, const VoxelMask& valid);

}  // namespace pspred
