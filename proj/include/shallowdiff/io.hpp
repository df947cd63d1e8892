#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shallowdiff/array.hpp"
#include "shallowdiff/grid.hpp"
#include "shallowdiff/params.hpp"
#include "shallowdiff/score_encoder.hpp"

namespace shallowdiff::io {

namespace fs = std::filesystem;

inline constexpr std::uint32_t kGridVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a sibling temp file and renames it into place.
void atomic_write(const fs::path& path, std::string_view bytes);
std::string read_file(const fs::path& path);

std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t file_hash(const fs::path& path);
std::string hex(std::uint64_t value);

// Grid files: "MELG", u32 version, u32 frames, u32 bins, frames*bins f64, all little-endian.
std::string encode_grid(const Grid& grid);
Grid decode_grid(std::string_view bytes);
void write_grid(const fs::path& path, const Grid& grid);
Grid read_grid(const fs::path& path);

// Checkpoints: "SDCK", u32 version, then per parameter u32 name length, name,
// u32 rank, u32 extents, f64 values.
using NamedArrays = std::vector<std::pair<std::string, Array>>;
std::string encode_checkpoint(const NamedArrays& values);
NamedArrays decode_checkpoint(std::string_view bytes);
void write_checkpoint(const fs::path& path, const ParamSet& params);
void load_checkpoint(const fs::path& path, ParamSet& params);

// Score lines: space-separated "phoneme:pitch:duration" triples.
std::string format_score(const MusicScore& score);
MusicScore parse_score(std::string_view line);
void write_scores(const fs::path& path, const std::vector<MusicScore>& scores);
std::vector<MusicScore> read_scores(const fs::path& path);

}  // namespace shallowdiff::io
