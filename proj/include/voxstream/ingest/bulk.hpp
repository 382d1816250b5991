// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "voxstream/core/octree.hpp"
#include "voxstream/ingest/descriptor_file.hpp"

namespace voxstream::ingest {

struct BulkOptions {
  std::uint32_t slab_depth = 0;  // z extent of one slab; 0 = brick height
  bool finish = true;            // mark_finished and fill_borders afterwards
};

struct BuildReport {
  double seconds = 0.0;
  std::uint64_t slabs = 0;
  core::TreeStats stats;

  std::string summary() const;
};

// Inserts the whole source as full-x, full-y z-runs, one worker thread per channel.
// Throws IoError for unreadable or wrongly sized files and ConfigError if the tree does not match.
BuildReport ingest_bulk(const RawVolumeSource& source, core::Octree& tree, const BulkOptions& opt = {});

}  // namespace voxstream::ingest
