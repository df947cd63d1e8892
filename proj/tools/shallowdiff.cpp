#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "shallowdiff/config.hpp"
#include "shallowdiff/errors.hpp"
#include "shallowdiff/pipeline.hpp"

namespace sd = shallowdiff;

namespace {

sd::ProxySource parse_source(const std::string& s) {
  if (s == "aux") return sd::ProxySource::aux;
  if (s == "blur") return sd::ProxySource::blur;
  throw sd::ValidationError("--source must be aux or blur, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shallow diffusion acoustic model on synthetic spectrogram grids"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string profile = "desk";
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--profile", profile, "Preset: desk or full")->capture_default_str();
  app.add_option("-c,--config", config_path, "key=value config file");
  app.add_option("--set", overrides, "Override one setting, KEY=VALUE (repeatable)");

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "Warmup, boundary predictor and denoiser training");

  auto* infer = app.add_subcommand("infer", "Sample grids for the validation scores or a score file");
  std::string mode;
  std::optional<int> k;
  std::string scores;
  infer->add_option("--mode", mode, "naive or shallow")->required()->check(CLI::IsMember({"naive", "shallow"}));
  infer->add_option("--k", k, "Shallow start step (defaults to the trained boundary)");
  infer->add_option("--scores", scores, "Score file to use instead of the validation split");

  auto* boundary = app.add_subcommand("boundary", "Per-step boundary report and both k estimates");
  std::string boundary_source = "aux";
  boundary->add_option("--source", boundary_source, "Proxy grids: aux or blur")->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "Trajectory KL against the prior for one item");
  std::string item;
  std::string analyze_source = "blur";
  analyze->add_option("--item", item, "Dataset item ID")->required();
  analyze->add_option("--source", analyze_source, "Proxy grids: aux or blur")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    sd::RunConfig config = sd::profile(profile);
    if (!config_path.empty()) sd::apply_file(config, config_path);
    for (const auto& o : overrides) sd::apply_assignment(config, o);
    sd::apply_environment(config);

    if (*gen) {
      sd::cmd_gen_data(config, std::cout);
    } else if (*train) {
      sd::cmd_train(config, std::cout);
    } else if (*infer) {
      sd::InferOptions options;
      options.mode = mode == "naive" ? sd::InferMode::naive : sd::InferMode::shallow;
      options.k = k;
      if (!scores.empty()) options.scores = scores;
      sd::cmd_infer(config, options, std::cout);
    } else if (*boundary) {
      sd::cmd_boundary(config, parse_source(boundary_source), std::cout);
    } else if (*analyze) {
      sd::cmd_analyze(config, item, parse_source(analyze_source), std::cout);
    }
  } catch (const sd::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
