#include "shallowdiff/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "shallowdiff/errors.hpp"
#include "shallowdiff/io.hpp"

namespace shallowdiff {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ValidationError("config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + expected);
}

template <typename T>
T parse_integral(std::string_view key, std::string_view value) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer in range");
  return v;
}

double parse_real(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) bad_value(key, value, "a finite number");
  return v;
}

std::string real_text(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field integral(std::string key, T RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = parse_integral<T>(key, v); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real(std::string key, double RunConfig::*member) {
  return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = parse_real(key, v); },
          [member](const RunConfig& c) { return real_text(c.*member); }};
}

Field path(std::string key, std::filesystem::path RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, std::string_view v) {
            if (v.empty()) bad_value(key, v, "a non-empty path");
            c.*member = std::filesystem::path(std::string(v));
          },
          [member](const RunConfig& c) { return (c.*member).string(); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      integral("steps", &RunConfig::steps),
      real("beta_first", &RunConfig::beta_first),
      real("beta_last", &RunConfig::beta_last),
      integral("channels", &RunConfig::channels),
      integral("layers", &RunConfig::layers),
      integral("kernel", &RunConfig::kernel),
      integral("dilation", &RunConfig::dilation),
      integral("encoder_channels", &RunConfig::encoder_channels),
      integral("encoder_layers", &RunConfig::encoder_layers),
      integral("decoder_layers", &RunConfig::decoder_layers),
      integral("heads", &RunConfig::heads),
      integral("ffn_hidden", &RunConfig::ffn_hidden),
      integral("vocab", &RunConfig::vocab),
      integral("pitch_vocab", &RunConfig::pitch_vocab),
      integral("frames", &RunConfig::frames),
      integral("bins", &RunConfig::bins),
      integral("bp_channels", &RunConfig::bp_channels),
      integral("bp_layers", &RunConfig::bp_layers),
      integral("train_items", &RunConfig::train_items),
      integral("valid_items", &RunConfig::valid_items),
      integral("harmonics", &RunConfig::harmonics),
      real("noise_floor", &RunConfig::noise_floor),
      integral("blur_radius", &RunConfig::blur_radius),
      real("harmonic_width", &RunConfig::harmonic_width),
      real("lr", &RunConfig::lr),
      integral("batch", &RunConfig::batch),
      integral("warmup_steps", &RunConfig::warmup_steps),
      integral("main_steps", &RunConfig::main_steps),
      integral("bp_steps", &RunConfig::bp_steps),
      integral("checkpoint_every", &RunConfig::checkpoint_every),
      integral("seed", &RunConfig::seed),
      {"lr_decay",
       [](RunConfig& c, std::string_view v) {
         if (v == "1" || v == "true") c.lr_decay = true;
         else if (v == "0" || v == "false") c.lr_decay = false;
         else bad_value("lr_decay", v, "true or false");
       },
       [](const RunConfig& c) { return std::string(c.lr_decay ? "true" : "false"); }},
      {"train_range",
       [](RunConfig& c, std::string_view v) {
         if (v == "boundary") c.train_range = TrainRange::boundary;
         else if (v == "full") c.train_range = TrainRange::full;
         else bad_value("train_range", v, "boundary or full");
       },
       [](const RunConfig& c) { return to_string(c.train_range); }},
      real("tau", &RunConfig::tau),
      {"method",
       [](RunConfig& c, std::string_view v) {
         if (v == "classifier") c.method = BoundaryMethod::classifier;
         else if (v == "kl") c.method = BoundaryMethod::kl;
         else if (v == "fixed") c.method = BoundaryMethod::fixed;
         else bad_value("method", v, "one of classifier, kl, fixed");
       },
       [](const RunConfig& c) { return to_string(c.method); }},
      integral("fixed_k", &RunConfig::fixed_k),
      integral("margin_draws", &RunConfig::margin_draws),
      path("dataset_dir", &RunConfig::dataset_dir),
      path("checkpoint_dir", &RunConfig::checkpoint_dir),
      path("output_dir", &RunConfig::output_dir),
  };
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("invalid config: " + message);
}

}  // namespace

std::string to_string(TrainRange range) {
  return range == TrainRange::full ? "full" : "boundary";
}

std::string to_string(BoundaryMethod method) {
  switch (method) {
    case BoundaryMethod::classifier: return "classifier";
    case BoundaryMethod::kl: return "kl";
    case BoundaryMethod::fixed: return "fixed";
  }
  return "?";
}

void RunConfig::validate() const {
  require(steps >= 2, "steps must be at least 2");
  require(beta_first > 0 && beta_first <= beta_last && beta_last < 1, "need 0 < beta_first <= beta_last < 1");
  require(channels > 0 && channels % 2 == 0, "channels must be even");
  require(layers >= 1, "layers must be at least 1");
  require(kernel % 2 == 1, "kernel must be odd");
  require(dilation >= 1, "dilation must be at least 1");
  require(heads >= 1 && encoder_channels % heads == 0, "encoder_channels must be divisible by heads");
  require(encoder_layers >= 1 && decoder_layers >= 1 && ffn_hidden >= 1, "encoder sizes must be positive");
  require(vocab >= 1 && pitch_vocab >= 1, "vocabularies must be positive");
  require(frames >= 8 && bins >= 8, "frames and bins must be at least 8");
  require(bp_channels > 0 && bp_channels % 2 == 0 && bp_layers >= 1, "classifier sizes must be positive");
  require(train_items >= 1 && valid_items >= 1, "need at least one training and one validation item");
  require(harmonics >= 1, "harmonics must be at least 1");
  require(noise_floor >= 0, "noise_floor must be non-negative");
  require(blur_radius >= 1, "blur_radius must be at least 1");
  require(harmonic_width > 0, "harmonic_width must be positive");
  require(lr > 0, "lr must be positive");
  require(batch >= 1, "batch must be at least 1");
  require(warmup_steps >= 1, "warmup_steps must be at least 1");
  require(bp_steps >= 1, "bp_steps must be at least 1");
  // Zero main steps is allowed: it yields the initialized denoiser.
  require(main_steps >= 0, "main_steps must be non-negative");
  require(checkpoint_every >= 1, "checkpoint_every must be at least 1");
  require(tau > 0 && tau < 1, "tau must lie in (0, 1)");
  require(method != BoundaryMethod::fixed || (fixed_k >= 1 && fixed_k <= steps), "fixed_k must lie in [1, steps]");
  require(margin_draws >= 1, "margin_draws must be at least 1");
  const auto canonical_dir = [](const std::filesystem::path& p) {
    auto out = std::filesystem::weakly_canonical(std::filesystem::absolute(p));
    return out.has_filename() ? out : out.parent_path();
  };
  const auto d = canonical_dir(dataset_dir);
  const auto c = canonical_dir(checkpoint_dir);
  const auto o = canonical_dir(output_dir);
  require(d != c && d != o && c != o, "dataset_dir, checkpoint_dir and output_dir must be distinct");
}

Schedule RunConfig::schedule() const { return Schedule::linear(steps, beta_first, beta_last); }

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.vocab = vocab;
  e.pitch_vocab = pitch_vocab;
  e.channels = encoder_channels;
  e.heads = heads;
  e.ffn_hidden = ffn_hidden;
  e.encoder_layers = encoder_layers;
  e.decoder_layers = decoder_layers;
  e.bins = bins;
  return e;
}

DenoiserConfig RunConfig::denoiser() const {
  DenoiserConfig d;
  d.channels = channels;
  d.layers = layers;
  d.kernel = kernel;
  d.dilation = dilation;
  d.bins = bins;
  d.cond_channels = encoder_channels;
  return d;
}

ClassifierConfig RunConfig::classifier() const {
  ClassifierConfig c;
  c.channels = bp_channels;
  c.layers = bp_layers;
  c.kernel = kernel;
  c.bins = bins;
  return c;
}

SynthSpec RunConfig::synth() const {
  SynthSpec s;
  s.seed = seed;
  s.items = train_items + valid_items;
  s.frames = frames;
  s.bins = bins;
  s.vocab = vocab;
  s.pitch_vocab = pitch_vocab;
  s.harmonics = harmonics;
  s.noise_floor = noise_floor;
  s.blur_radius = blur_radius;
  s.harmonic_width = harmonic_width;
  return s;
}

RunConfig profile(std::string_view name) {
  RunConfig c;
  if (name == "desk") return c;
  if (name == "full") {
    c.channels = 256;
    c.layers = 20;
    c.encoder_channels = 256;
    c.encoder_layers = 4;
    c.decoder_layers = 4;
    c.ffn_hidden = 1024;
    c.bp_channels = 64;
    c.warmup_steps = 160000;
    c.bp_steps = 30000;
    c.main_steps = 160000;
    c.batch = 48;
    c.lr = 1e-3;
    c.lr_decay = false;
    c.checkpoint_every = 10000;
    return c;
  }
  throw ValidationError("unknown profile '" + std::string(name) + "' (expected desk or full)");
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

void apply_assignment(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ValidationError("expected key=value, got '" + std::string(assignment) + "'");
  apply_setting(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_text(RunConfig& config, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      apply_assignment(config, t);
    } catch (const ValidationError& e) {
      throw ValidationError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
  apply_text(config, io::read_file(path), path.string());
}

void apply_environment(RunConfig& config) {
  if (const char* seed = std::getenv("SHALLOWDIFF_SEED")) {
    config.seed = parse_integral<std::uint64_t>("SHALLOWDIFF_SEED", trim(seed));
  }
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + '=' + f.get(config) + '\n';
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace shallowdiff
