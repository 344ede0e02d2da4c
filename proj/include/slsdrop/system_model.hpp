#pragma once

#include <string>
#include <vector>

#include "slsdrop/fir.hpp"

namespace slsdrop {

// Ordered partition of a flat index range into contiguous per-subsystem
// blocks. Block i owns indices [start(i), start(i) + size(i)).
struct BlockPartition {
  std::vector<Index> starts;
  std::vector<Index> sizes;

  static BlockPartition from_sizes(const std::vector<Index>& sizes) {
    BlockPartition part;
    part.sizes = sizes;
    part.starts.resize(sizes.size());
    Index offset = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      part.starts[i] = offset;
      offset += sizes[i];
    }
    return part;
  }

  Index count() const { return static_cast<Index>(sizes.size()); }
  Index start(Index i) const { return starts[static_cast<std::size_t>(i)]; }
  Index size(Index i) const { return sizes[static_cast<std::size_t>(i)]; }

  Index total() const {
    Index sum = 0;
    for (Index s : sizes) sum += s;
    return sum;
  }

  // Blocks must be nonempty, contiguous, and cover [0, expected_total).
  void validate(Index expected_total, const char* name) const {
    if (starts.size() != sizes.size()) {
      throw DimensionError(std::string(name) +
                           ": starts/sizes length mismatch");
    }
    Index offset = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (sizes[i] <= 0) {
        throw DimensionError(std::string(name) + ": block " +
                             std::to_string(i) + " has nonpositive size");
      }
      if (starts[i] != offset) {
        throw DimensionError(std::string(name) + ": block " +
                             std::to_string(i) + " starts at " +
                             std::to_string(starts[i]) + ", expected " +
                             std::to_string(offset));
      }
      offset += sizes[i];
    }
    if (offset != expected_total) {
      throw DimensionError(std::string(name) + ": blocks cover " +
                           std::to_string(offset) + " indices, expected " +
                           std::to_string(expected_total));
    }
  }

  bool operator==(const BlockPartition& other) const {
    return starts == other.starts && sizes == other.sizes;
  }
};

// Discrete-time linear plant x_{t+1} = A x_t + B u_t + w_t whose state and
// input coordinates are partitioned among interconnected subsystems.
struct SystemModel {
  Matrix A;
  Matrix B;
  BlockPartition state_blocks;
  BlockPartition input_blocks;

  Index state_dim() const { return A.rows(); }
  Index input_dim() const { return B.cols(); }
  Index subsystem_count() const { return state_blocks.count(); }

  void validate() const {
    if (A.rows() != A.cols()) {
      throw DimensionError("SystemModel: A is " + std::to_string(A.rows()) +
                           "x" + std::to_string(A.cols()) + ", expected square");
    }
    if (B.rows() != A.rows()) {
      throw DimensionError("SystemModel: B has " + std::to_string(B.rows()) +
                           " rows, expected " + std::to_string(A.rows()));
    }
    state_blocks.validate(state_dim(), "state_blocks");
    input_blocks.validate(input_dim(), "input_blocks");
    if (state_blocks.count() != input_blocks.count()) {
      throw DimensionError(
          "SystemModel: state and input partitions disagree on the number of "
          "subsystems (" +
          std::to_string(state_blocks.count()) + " vs " +
          std::to_string(input_blocks.count()) + ")");
    }
  }
};

// Block-column of the identity belonging to subsystem i: n x size(i), with
// ones on the subsystem's own rows.
inline Matrix identity_block_column(const SystemModel& sys, Index i) {
  Matrix block = Matrix::Zero(sys.state_dim(), sys.state_blocks.size(i));
  block.block(sys.state_blocks.start(i), 0, sys.state_blocks.size(i),
              sys.state_blocks.size(i)) =
      Matrix::Identity(sys.state_blocks.size(i), sys.state_blocks.size(i));
  return block;
}

// Flat indices owned by the given subsystems under a partition, ascending.
inline std::vector<Index> partition_indices(const BlockPartition& part,
                                            const std::vector<int>& subsystems) {
  std::vector<Index> indices;
  for (int s : subsystems) {
    for (Index r = 0; r < part.size(s); ++r) {
      indices.push_back(part.start(s) + r);
    }
  }
  return indices;
}

}  // namespace slsdrop
