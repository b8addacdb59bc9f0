#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "icodiff/denoiser.hpp"
#include "icodiff/schedule.hpp"

namespace icodiff {

struct Checkpoint {
  DenoiserParams params;  // params.config() carries the architecture and the no-mask flag
  int steps = kDefaultSteps;
  double cosine_offset = kDefaultCosineOffset;
  int epochs = 0;  // epochs trained
};

/// ICKP layout: "ICKP", u32 version = 1, u64 manifest length, the manifest,
/// then every array as little-endian f32 in manifest order.
///
/// The manifest is UTF-8 text, one record per line:
///   meta <key> <value>
///   array <name> f32 <dim0>x<dim1>...
/// Meta keys come first; arrays follow in DenoiserParams order.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws FormatError when the file is malformed or its arrays do not match
// the architecture described by its own meta records.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// The manifest text alone, as written by write_checkpoint.
std::string checkpoint_manifest(const Checkpoint& ckpt);

}  // namespace icodiff
