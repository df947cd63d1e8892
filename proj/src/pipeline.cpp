#include "shallowdiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "shallowdiff/diffusion.hpp"
#include "shallowdiff/errors.hpp"
#include "shallowdiff/io.hpp"
#include "shallowdiff/optim.hpp"
#include "shallowdiff/synth_data.hpp"

namespace shallowdiff {

namespace fs = std::filesystem;

namespace {

// Any activation beyond this is treated as divergence.
constexpr double kActivationLimit = 1e6;

std::string item_id(std::size_t i) {
  std::ostringstream ss;
  ss << "item_" << std::setw(4) << std::setfill('0') << i;
  return ss.str();
}

std::string real_text(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}

void check_activations(const Array& values, const std::string& what, int step) {
  for (double v : values.values()) {
    if (!std::isfinite(v) || std::fabs(v) > kActivationLimit) {
      throw DivergenceError(what + " produced a non-finite or runaway activation at step " + std::to_string(step));
    }
  }
}

class TrainLog {
 public:
  explicit TrainLog(fs::path path) : path_(std::move(path)) {}
  void add(const char* stage, int step, double loss) {
    text_ += std::string(stage) + ',' + std::to_string(step) + ',' + real_text(loss) + '\n';
  }
  void flush() const { io::atomic_write(path_, "stage,step,loss\n" + text_); }

 private:
  fs::path path_;
  std::string text_;
};

void check_dataset_shape(const Dataset& data, const RunConfig& config) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.targets[i].frames() != config.frames || data.targets[i].bins() != config.bins) {
      throw ValidationError("dataset item " + data.ids[i] + " is " + std::to_string(data.targets[i].frames()) + "x" +
                            std::to_string(data.targets[i].bins()) + ", config expects " +
                            std::to_string(config.frames) + "x" + std::to_string(config.bins));
    }
  }
}

void check_score(const MusicScore& score, const RunConfig& config, const std::string& id) {
  try {
    validate_score(score, config.vocab, config.pitch_vocab);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(id + ": " + e.what());
  }
  if (score.frames() != config.frames) {
    throw ValidationError(id + ": score spans " + std::to_string(score.frames()) + " frames, model expects " +
                          std::to_string(config.frames));
  }
}

double stage_lr(const RunConfig& config, int step, int total) {
  if (!config.lr_decay) return config.lr;
  return config.lr * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

std::vector<double> warmup_stage(ScoreEncoder& encoder, const Dataset& data, const std::vector<std::size_t>& train,
                                 const RunConfig& config, TrainLog& log_csv, std::ostream& log) {
  Rng rng(config.seed, 0x3A12);
  Adam adam(encoder.params(), AdamConfig{.lr = config.lr});
  std::vector<double> losses;
  const int last = static_cast<int>(train.size()) - 1;
  for (int step = 0; step < config.warmup_steps; ++step) {
    adam.set_lr(stage_lr(config, step, config.warmup_steps));
    adam.zero_grad();
    ad::Var total;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const std::size_t i = train[static_cast<std::size_t>(rng.uniform_int(0, last))];
      const ad::Var pred = encoder.aux_decode(encoder.encode(data.scores[i]));
      check_activations(pred.value(), "auxiliary decoder", step);
      const ad::Var loss = ad::l1(pred, data.targets[i].to_array());
      total = total.defined() ? ad::add(total, loss) : loss;
    }
    total = ad::scale(total, 1.0 / static_cast<double>(config.batch));
    const double value = total.value().item();
    if (!std::isfinite(value)) {
      log_csv.flush();
      throw DivergenceError("warmup loss became non-finite at step " + std::to_string(step));
    }
    losses.push_back(value);
    log_csv.add("warmup", step, value);
    ad::backward(total);
    adam.step();
    if ((step + 1) % config.checkpoint_every == 0) {
      io::write_checkpoint(config.checkpoint_dir / files::encoder, encoder.params());
      log << "warmup step " << step + 1 << " l1 " << value << '\n';
    }
  }
  io::write_checkpoint(config.checkpoint_dir / files::encoder, encoder.params());
  return losses;
}

std::vector<double> main_stage(Denoiser& denoiser, const std::vector<Array>& conditions,
                               const std::vector<Grid>& targets, int t_max, const RunConfig& config,
                               const Schedule& schedule, TrainLog& log_csv, std::ostream& log) {
  const fs::path path = config.checkpoint_dir / files::denoiser;
  io::write_checkpoint(path, denoiser.params());
  std::vector<ad::Var> cond;
  for (const auto& c : conditions) cond.push_back(ad::transpose(ad::Var::constant(c)));
  Rng rng(config.seed, 0x3A17);
  Adam adam(denoiser.params(), AdamConfig{.lr = config.lr});
  std::vector<double> losses;
  const int last = static_cast<int>(targets.size()) - 1;
  for (int step = 0; step < config.main_steps; ++step) {
    adam.set_lr(stage_lr(config, step, config.main_steps));
    adam.zero_grad();
    ad::Var total;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, last));
      const int t = rng.uniform_int(1, t_max);
      const Grid eps = Grid::standard_normal(targets[i].frames(), targets[i].bins(), rng);
      const Grid noised = forward_sample(targets[i], t, eps, schedule).grid;
      const ad::Var pred = denoiser.forward(ad::Var::constant(noised.to_channel_major()), cond[i], t);
      check_activations(pred.value(), "denoiser", step);
      const ad::Var loss = ad::mse(pred, eps.to_channel_major());
      total = total.defined() ? ad::add(total, loss) : loss;
    }
    total = ad::scale(total, 1.0 / static_cast<double>(config.batch));
    const double value = total.value().item();
    if (!std::isfinite(value)) {
      log_csv.flush();
      throw DivergenceError("denoiser loss became non-finite at step " + std::to_string(step) +
                            "; last good checkpoint kept at " + path.string());
    }
    losses.push_back(value);
    log_csv.add("main", step, value);
    ad::backward(total);
    adam.step();
    if ((step + 1) % config.checkpoint_every == 0) {
      io::write_checkpoint(path, denoiser.params());
      log << "main step " << step + 1 << " loss " << value << '\n';
    }
  }
  io::write_checkpoint(path, denoiser.params());
  return losses;
}

std::vector<GridPair> boundary_pairs(const RunConfig& config, const Dataset& data, ProxySource source) {
  std::vector<GridPair> pairs;
  const auto train = data.split(true);
  if (source == ProxySource::blur) {
    for (std::size_t i : train) pairs.push_back({data.targets[i], data.proxies[i]});
    return pairs;
  }
  const ScoreEncoder encoder = load_encoder(config);
  for (std::size_t i : train) pairs.push_back({data.targets[i], encoder.predict(data.scores[i])});
  return pairs;
}

}  // namespace

std::vector<std::size_t> Dataset::split(bool training) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (train[i] == training) out.push_back(i);
  }
  return out;
}

std::size_t Dataset::index_of(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ValidationError("no dataset item named '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  std::string manifest;
  for (std::size_t i = 0; i < data.size(); ++i) {
    io::write_grid(dir / "targets" / (data.ids[i] + ".melg"), data.targets[i]);
    io::write_grid(dir / "proxies" / (data.ids[i] + ".melg"), data.proxies[i]);
    manifest += data.ids[i] + (data.train[i] ? " train\n" : " valid\n");
  }
  io::write_scores(dir / "scores.txt", data.scores);
  io::atomic_write(dir / "manifest.txt", manifest);
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) throw ValidationError("no dataset at " + dir.string() + " (missing manifest.txt)");
  Dataset data;
  data.scores = io::read_scores(dir / "scores.txt");
  std::istringstream manifest(io::read_file(dir / "manifest.txt"));
  std::string id, split;
  while (manifest >> id >> split) {
    if (split != "train" && split != "valid") throw ValidationError("manifest: bad split '" + split + "' for " + id);
    data.ids.push_back(id);
    data.train.push_back(split == "train");
    data.targets.push_back(io::read_grid(dir / "targets" / (id + ".melg")));
    data.proxies.push_back(io::read_grid(dir / "proxies" / (id + ".melg")));
    if (!data.targets.back().same_shape(data.proxies.back())) throw ValidationError(id + ": proxy shape differs from target");
  }
  if (data.ids.empty()) throw ValidationError("manifest lists no items");
  if (data.scores.size() != data.ids.size()) {
    throw ValidationError("scores.txt has " + std::to_string(data.scores.size()) + " lines, manifest has " +
                          std::to_string(data.ids.size()) + " items");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.scores[i].frames() != data.targets[i].frames()) {
      throw ValidationError(data.ids[i] + ": score frames differ from grid frames");
    }
  }
  return data;
}

Dataset cmd_gen_data(const RunConfig& config, std::ostream& log) {
  config.validate();
  std::vector<std::string> warnings;
  auto items = generate(config.synth(), &warnings);
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  Dataset data;
  for (std::size_t i = 0; i < items.size(); ++i) {
    data.ids.push_back(item_id(i));
    data.scores.push_back(std::move(items[i].score));
    data.proxies.push_back(blur_proxy(items[i].target, config.blur_radius));
    data.targets.push_back(std::move(items[i].target));
    data.train.push_back(i < config.train_items);
  }
  write_dataset(config.dataset_dir, data);
  log << "wrote " << data.size() << " items to " << config.dataset_dir.string() << '\n';
  return data;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const Schedule schedule = config.schedule();
  const Dataset data = load_dataset(config.dataset_dir);
  check_dataset_shape(data, config);
  for (std::size_t i = 0; i < data.size(); ++i) check_score(data.scores[i], config, data.ids[i]);
  const auto train = data.split(true);
  if (train.empty()) throw ValidationError("dataset has no training items");

  fs::create_directories(config.checkpoint_dir);
  io::atomic_write(config.checkpoint_dir / files::run_config, to_text(config));
  TrainLog log_csv(config.checkpoint_dir / files::train_log);
  TrainResult result;

  ScoreEncoder encoder(config.encoder(), config.seed);
  result.warmup_losses = warmup_stage(encoder, data, train, config, log_csv, log);
  log << "warmup l1 " << result.warmup_losses.front() << " -> " << result.warmup_losses.back() << '\n';

  std::vector<GridPair> pairs;
  std::vector<Array> conditions;
  std::vector<Grid> targets;
  for (std::size_t i : train) {
    const ad::Var cond = encoder.encode(data.scores[i]);
    pairs.push_back({data.targets[i], Grid::from_array(encoder.aux_decode(cond).value())});
    conditions.push_back(cond.value());
    targets.push_back(data.targets[i]);
  }

  BoundaryClassifier classifier(config.classifier(), config.seed);
  try {
    result.bp_losses = bp_train(classifier, pairs, schedule,
                                BpTrainConfig{.steps = config.bp_steps, .batch = config.batch, .lr = config.lr,
                                              .seed = config.seed});
  } catch (const DivergenceError&) {
    log_csv.flush();
    throw;
  }
  for (std::size_t s = 0; s < result.bp_losses.size(); ++s) log_csv.add("boundary", static_cast<int>(s), result.bp_losses[s]);
  io::write_checkpoint(config.checkpoint_dir / files::boundary, classifier.params());

  const KlSelection kl = select_k_kl(pairs, schedule);
  result.k_kl = kl.k;
  if (kl.degenerate) log << "warning: trajectory KL never reaches the prior KL; k_kl falls back to T\n";
  const BoundaryProbability bp = [&classifier](const Grid& g, int t) { return classifier.probability(g, t); };
  switch (config.method) {
    case BoundaryMethod::classifier:
      result.k_classifier =
          select_k_classifier(bp, pairs, config.tau, schedule, config.margin_draws, config.seed).k;
      result.k = *result.k_classifier;
      break;
    case BoundaryMethod::kl: result.k = kl.k; break;
    case BoundaryMethod::fixed: result.k = config.fixed_k; break;
  }
  std::string boundary = "method=" + to_string(config.method) + "\nk=" + std::to_string(result.k) +
                         "\nk_kl=" + std::to_string(result.k_kl) + '\n';
  if (result.k_classifier) boundary += "k_classifier=" + std::to_string(*result.k_classifier) + '\n';
  io::atomic_write(config.checkpoint_dir / files::boundary_k, boundary);
  log << "boundary k=" << result.k << " (" << to_string(config.method) << "), k_kl=" << result.k_kl << '\n';

  Denoiser denoiser(config.denoiser(), config.seed);
  const int t_max = config.train_range == TrainRange::full ? config.steps : result.k;
  result.main_losses = main_stage(denoiser, conditions, targets, t_max, config, schedule, log_csv, log);
  if (!result.main_losses.empty()) {
    log << "denoiser loss " << result.main_losses.front() << " -> " << result.main_losses.back() << '\n';
  }
  log_csv.flush();
  return result;
}

ScoreEncoder load_encoder(const RunConfig& config) {
  ScoreEncoder encoder(config.encoder(), config.seed);
  io::load_checkpoint(config.checkpoint_dir / files::encoder, encoder.params());
  return encoder;
}

Denoiser load_denoiser(const RunConfig& config) {
  Denoiser denoiser(config.denoiser(), config.seed);
  io::load_checkpoint(config.checkpoint_dir / files::denoiser, denoiser.params());
  return denoiser;
}

BoundaryClassifier load_classifier(const RunConfig& config) {
  BoundaryClassifier classifier(config.classifier(), config.seed);
  io::load_checkpoint(config.checkpoint_dir / files::boundary, classifier.params());
  return classifier;
}

int load_boundary_k(const RunConfig& config) {
  std::istringstream in(io::read_file(config.checkpoint_dir / files::boundary_k));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("k=", 0) == 0) {
      try {
        return std::stoi(line.substr(2));
      } catch (const std::exception&) {
        break;
      }
    }
  }
  throw ValidationError("no k recorded in " + (config.checkpoint_dir / files::boundary_k).string());
}

std::vector<ItemMetrics> cmd_infer(const RunConfig& config, const InferOptions& options, std::ostream& log) {
  config.validate();
  const Schedule schedule = config.schedule();
  std::vector<std::string> ids;
  std::vector<MusicScore> scores;
  if (options.scores) {
    scores = io::read_scores(*options.scores);
    for (std::size_t i = 0; i < scores.size(); ++i) ids.push_back("score_" + item_id(i).substr(5));
  } else {
    const Dataset data = load_dataset(config.dataset_dir);
    for (std::size_t i : data.split(false)) {
      ids.push_back(data.ids[i]);
      scores.push_back(data.scores[i]);
    }
  }
  for (std::size_t i = 0; i < scores.size(); ++i) check_score(scores[i], config, ids[i]);

  int k = config.steps;
  if (options.mode == InferMode::shallow) {
    k = options.k ? *options.k : load_boundary_k(config);
    if (k < 1 || k > config.steps) {
      throw ValidationError("k=" + std::to_string(k) + " outside [1, " + std::to_string(config.steps) + "]");
    }
  }
  const ScoreEncoder encoder = load_encoder(config);
  const Denoiser denoiser = load_denoiser(config);

  const std::string mode = options.mode == InferMode::naive ? "naive" : "shallow";
  const fs::path out_dir = config.output_dir / mode;
  std::vector<ItemMetrics> metrics;
  std::string metrics_text;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Rng rng = Rng(config.seed, 0x1AFE).fork(i);
    const auto start = std::chrono::steady_clock::now();
    const ad::Var cond = encoder.encode(scores[i]);
    int calls = 0;
    const EpsPredictor bound = denoiser.bind(cond.value());
    const EpsPredictor counted = [&](const Grid& g, int t) {
      ++calls;
      return bound(g, t);
    };
    Grid out;
    if (options.mode == InferMode::naive) {
      out = naive_sample(counted, config.frames, config.bins, schedule, rng);
    } else {
      const Grid aux = Grid::from_array(encoder.aux_decode(cond).value());
      out = shallow_sample(counted, aux, k, schedule, rng);
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!out.all_finite()) throw DivergenceError("sampler produced non-finite values for " + ids[i]);
    io::write_grid(out_dir / (ids[i] + ".melg"), out.clipped(-1.0, 1.0));
    metrics.push_back({ids[i], calls, ms});
    std::ostringstream line;
    line << "item=" << ids[i] << " mode=" << mode << " calls=" << calls << " wall_ms=" << std::fixed
         << std::setprecision(3) << ms;
    metrics_text += line.str() + '\n';
    log << line.str() << '\n';
  }
  io::atomic_write(out_dir / "metrics.txt", metrics_text);
  return metrics;
}

BoundaryReport cmd_boundary(const RunConfig& config, ProxySource source, std::ostream& log) {
  config.validate();
  const Schedule schedule = config.schedule();
  const Dataset data = load_dataset(config.dataset_dir);
  check_dataset_shape(data, config);
  const auto pairs = boundary_pairs(config, data, source);
  const BoundaryClassifier classifier = load_classifier(config);
  const BoundaryProbability bp = [&classifier](const Grid& g, int t) { return classifier.probability(g, t); };
  BoundaryReport report = build_boundary_report(bp, pairs, config.tau, schedule, config.margin_draws, config.seed);
  std::ostringstream csv;
  csv << std::setprecision(std::numeric_limits<double>::max_digits10);
  csv << "t,bp_real,bp_fake,margin,kl_traj,kl_prior\n";
  for (const auto& r : report.steps) {
    csv << r.t << ',' << r.bp_real << ',' << r.bp_fake << ',' << r.margin << ',' << r.kl_traj << ',' << r.kl_prior
        << '\n';
  }
  io::atomic_write(config.output_dir / "boundary_report.csv", csv.str());
  if (report.kl_degenerate) log << "warning: trajectory KL never reaches the prior KL; k_kl falls back to T\n";
  log << "k_classifier=" << report.k_classifier << '\n' << "k_kl=" << report.k_kl << '\n';
  return report;
}

std::vector<TrajectoryRow> cmd_analyze(const RunConfig& config, const std::string& item, ProxySource source,
                                       std::ostream& log) {
  config.validate();
  const Schedule schedule = config.schedule();
  const Dataset data = load_dataset(config.dataset_dir);
  const std::size_t i = data.index_of(item);
  Grid proxy = data.proxies[i];
  if (source == ProxySource::aux) proxy = load_encoder(config).predict(data.scores[i]);
  const Grid& target = data.targets[i];
  require_same_shape(target, proxy, "analyze");

  std::vector<TrajectoryRow> rows;
  const double prior = kl_prior(target, schedule);
  std::ostringstream csv;
  csv << std::setprecision(std::numeric_limits<double>::max_digits10) << "t,kl_traj,kl_prior\n";
  std::optional<int> crossing;
  for (int t = 1; t <= schedule.steps; ++t) {
    const double traj = kl_trajectory(target, proxy, t, schedule);
    rows.push_back({t, traj, prior});
    if (!crossing && traj <= prior) crossing = t;
    csv << t << ',' << traj << ',' << prior << '\n';
  }
  io::atomic_write(config.output_dir / ("analyze_" + item + ".csv"), csv.str());
  log << "crossing=" << (crossing ? std::to_string(*crossing) : std::string("none")) << '\n';
  return rows;
}

}  // namespace shallowdiff
