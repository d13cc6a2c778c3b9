#include "pspred/tensor.hpp"

#include <set>

namespace pspred {

const Image& InputTensor::channel(int c) const {
  switch (c) {
    case 0: return x1;
    case 1: return x2;
    case 2: return x3;
    case 3: return x4;
    default: throw PipelineError("input tensor has 4 channels, asked for " + std::to_string(c));
  }
}

InputTensor assemble_input_tensor(Point tx, std::span<const Point> queries, const Image& x3,
                                  const SlfEstimate& slf, const VoxelMask& valid) {
  const GridSpec& grid = slf.grid;
  if (x3.width != grid.grid_l || x3.height != grid.grid_w) {
    throw PipelineError("map image does not match the grid");
  }
  const auto tx_q = grid.grid_point_index(tx);
  if (!tx_q) throw PipelineError("transmitter is not on a grid point");
  if (!valid.valid(*tx_q)) throw PipelineError("transmitter voxel lies inside an obstacle");

  InputTensor t;
  t.x1 = Image(grid.grid_l, grid.grid_w);
  t.x1[*tx_q] = 1.0;
  t.x2 = Image(grid.grid_l, grid.grid_w);
  std::set<int> seen;
  for (Point q : queries) {
    const auto idx = grid.grid_point_index(q);
    if (!idx) throw PipelineError("query point is not on a grid point");
    if (!seen.insert(*idx).second) throw PipelineError("duplicate query point");
    t.x2[*idx] = 1.0;
  }
  t.x3 = x3;
  t.x4 = link_shading_image(slf, tx, queries, grid, slf.ellipse_width_m);
  return t;
}

}  // namespace pspred
