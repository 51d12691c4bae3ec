#pragma once

#include <string>

#include "tlsan/ingest.hpp"
#include "tlsan/model.hpp"

namespace tlsan::io {

// Binary dataset file: magic "TLSD", version u16, little-endian; manifest as
// length-prefixed UTF-8 JSON; then the per-user session arrays.
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

// Human-readable dump, one training/test example per line.
void dump_dataset_tsv(const Dataset& dataset, const std::string& path);

// Checkpoint file: magic "TLSC", version u16, hyperparameter block, then
// each tensor as (name, dims, row-major 64-bit floats). Written atomically
// (temp file + rename). Load validates shapes against the hyperparameters.
void write_checkpoint(const ModelParams& params, const std::string& path);
ModelParams read_checkpoint(const std::string& path);

}  // namespace tlsan::io
