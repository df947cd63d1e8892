#include "shallowdiff/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "shallowdiff/errors.hpp"

namespace shallowdiff::io {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw ValidationError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw ValidationError(what_ + ": truncated at byte " + std::to_string(pos_));
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }

  double f64() {
    const auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return std::bit_cast<double>(v);
  }

  void expect_magic(std::string_view magic) {
    if (take(magic.size()) != magic) throw ValidationError(what_ + ": bad magic, expected " + std::string(magic));
  }

 private:
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

int parse_int(std::string_view field, std::string_view line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError("bad integer '" + std::string(field) + "' in score line: " + std::string(line));
  }
  return v;
}

}  // namespace

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_hash(const fs::path& path) { return fnv1a(read_file(path)); }

std::string hex(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = digits[value & 0xF];
  return s;
}

std::string encode_grid(const Grid& grid) {
  if (!grid.all_finite()) throw ValidationError("refusing to write a grid with non-finite values");
  std::string out = "MELG";
  put_u32(out, kGridVersion);
  put_u32(out, to_u32(grid.frames(), "frame count"));
  put_u32(out, to_u32(grid.bins(), "bin count"));
  out.reserve(out.size() + 8 * grid.size());
  for (double v : grid.values()) put_f64(out, v);
  return out;
}

Grid decode_grid(std::string_view bytes) {
  Reader r(bytes, "grid file");
  r.expect_magic("MELG");
  const auto version = r.u32();
  if (version != kGridVersion) throw ValidationError("grid file: unsupported version " + std::to_string(version));
  const std::size_t frames = r.u32(), bins = r.u32();
  if (bytes.size() != 16 + 8 * frames * bins) {
    throw ValidationError("grid file: payload is " + std::to_string(bytes.size() - 16) + " bytes, header implies " +
                          std::to_string(8 * frames * bins));
  }
  std::vector<double> values(frames * bins);
  for (auto& v : values) {
    v = r.f64();
    if (!std::isfinite(v)) throw ValidationError("grid file: non-finite value");
  }
  return Grid(frames, bins, std::move(values));
}

void write_grid(const fs::path& path, const Grid& grid) { atomic_write(path, encode_grid(grid)); }

Grid read_grid(const fs::path& path) {
  try {
    return decode_grid(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string encode_checkpoint(const NamedArrays& values) {
  std::string out = "SDCK";
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, array] : values) {
    put_u32(out, to_u32(name.size(), "parameter name"));
    out += name;
    put_u32(out, to_u32(array.rank(), "rank"));
    for (std::size_t d : array.shape()) put_u32(out, to_u32(d, "extent"));
    for (double v : array.values()) put_f64(out, v);
  }
  return out;
}

NamedArrays decode_checkpoint(std::string_view bytes) {
  Reader r(bytes, "checkpoint");
  r.expect_magic("SDCK");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  NamedArrays out;
  while (!r.done()) {
    std::string name(r.take(r.u32()));
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    std::vector<double> data(shape_size(shape));
    for (auto& v : data) {
      v = r.f64();
      if (!std::isfinite(v)) throw ValidationError("checkpoint: non-finite value in " + name);
    }
    out.emplace_back(std::move(name), Array(std::move(shape), std::move(data)));
  }
  return out;
}

void write_checkpoint(const fs::path& path, const ParamSet& params) {
  atomic_write(path, encode_checkpoint(params.snapshot()));
}

void load_checkpoint(const fs::path& path, ParamSet& params) {
  try {
    params.assign(decode_checkpoint(read_file(path)));
  } catch (const std::invalid_argument& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string format_score(const MusicScore& score) {
  std::string out;
  for (std::size_t i = 0; i < score.phonemes.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(score.phonemes[i]) + ':' + std::to_string(score.pitches[i]) + ':' +
           std::to_string(score.durations[i]);
  }
  return out;
}

MusicScore parse_score(std::string_view line) {
  MusicScore score;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos == line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    const auto token = line.substr(pos, end - pos);
    const auto c1 = token.find(':');
    const auto c2 = c1 == std::string_view::npos ? c1 : token.find(':', c1 + 1);
    if (c2 == std::string_view::npos || token.find(':', c2 + 1) != std::string_view::npos) {
      throw ValidationError("score token '" + std::string(token) + "' is not phoneme:pitch:duration");
    }
    score.phonemes.push_back(parse_int(token.substr(0, c1), line));
    score.pitches.push_back(parse_int(token.substr(c1 + 1, c2 - c1 - 1), line));
    score.durations.push_back(parse_int(token.substr(c2 + 1), line));
    pos = end;
  }
  if (score.phonemes.empty()) throw ValidationError("empty score line");
  return score;
}

void write_scores(const fs::path& path, const std::vector<MusicScore>& scores) {
  std::string text;
  for (const auto& s : scores) text += format_score(s) + '\n';
  atomic_write(path, text);
}

std::vector<MusicScore> read_scores(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<MusicScore> scores;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      scores.push_back(parse_score(line));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return scores;
}

}  // namespace shallowdiff::io
